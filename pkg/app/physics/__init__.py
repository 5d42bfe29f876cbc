# Physics module
