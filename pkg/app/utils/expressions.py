"""
Safe compilation of pointwise expressions used in config files.

Expressions such as ``"0.5*sin(x)*sin(y)"`` or ``"s**3 - s"`` are parsed with
``ast`` and only arithmetic, numeric literals, whitelisted numpy functions and
the declared variable names are accepted. The compiled callable is vectorized
over numpy arrays.
"""

import ast
from typing import Callable, Dict, Sequence

import numpy as np

from app.core.errors import ConfigurationError

ALLOWED_FUNCTIONS: Dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "arctan": np.arctan,
    "sign": np.sign,
}

ALLOWED_CONSTANTS: Dict[str, float] = {
    "pi": float(np.pi),
    "e": float(np.e),
}

ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Call,
    ast.Name,
    ast.Load,
    ast.Constant,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)


def _check_tree(tree: ast.AST, variables: Sequence[str], source: str) -> None:
    for node in ast.walk(tree):
        if not isinstance(node, ALLOWED_NODES):
            raise ConfigurationError(
                f"Unsupported syntax '{type(node).__name__}' in expression '{source}'"
            )
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigurationError(f"Only numeric literals are allowed in expression '{source}'")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in ALLOWED_FUNCTIONS:
                raise ConfigurationError(f"Unknown function in expression '{source}'")
            if node.keywords:
                raise ConfigurationError(f"Keyword arguments are not allowed in '{source}'")
        if isinstance(node, ast.Name):
            name = node.id
            if name not in variables and name not in ALLOWED_CONSTANTS and name not in ALLOWED_FUNCTIONS:
                raise ConfigurationError(
                    f"Unknown name '{name}' in expression '{source}'; allowed variables: {list(variables)}"
                )


def compile_expression(source: str, variables: Sequence[str]) -> Callable[..., np.ndarray]:
    """
    Compile ``source`` into a function of the given variables.

    The returned callable takes the variables positionally and always returns an
    array broadcast to the shape of the first argument, so constant expressions
    such as ``"1"`` still yield one value per grid point.
    """
    try:
        tree = ast.parse(source.strip(), mode="eval")
    except SyntaxError as e:
        raise ConfigurationError(f"Invalid expression '{source}': {e.msg}") from e

    _check_tree(tree, variables, source)
    code = compile(tree, f"<expr {source}>", "eval")
    namespace = {"__builtins__": {}}
    namespace.update(ALLOWED_FUNCTIONS)
    namespace.update(ALLOWED_CONSTANTS)

    def evaluate(*args: np.ndarray) -> np.ndarray:
        if len(args) != len(variables):
            raise ConfigurationError(
                f"Expression '{source}' expects {len(variables)} argument(s), got {len(args)}"
            )
        local_vars = {name: np.asarray(value, dtype=float) for name, value in zip(variables, args)}
        with np.errstate(all="ignore"):
            result = eval(code, namespace, local_vars)
        shape = np.shape(args[0]) if args else ()
        return np.broadcast_to(np.asarray(result, dtype=float), shape).copy()

    return evaluate


def evaluate_constant(source) -> float:
    """Evaluate a constant expression such as ``"2*pi"``; numbers pass through."""
    if isinstance(source, (int, float)):
        return float(source)
    value = compile_expression(str(source), [])()
    if not np.isfinite(value):
        raise ConfigurationError(f"Constant expression '{source}' is not finite")
    return float(value)
