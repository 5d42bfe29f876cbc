# Routers module