from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

# -------------------- Field Specs --------------------

class FieldSpec(BaseModel):
    """
    A scalar field on the domain: forcing h or resolvent data.

    zero          -> identically zero
    modal_list    -> list of [mode position (1-based, lexicographic), value] pairs
    pointwise_expr-> expression in x (and y in 2D), projected onto the basis
    random        -> fixed-seed Gaussian coefficients with 1/j decay, times `scale`
    """
    model_config = ConfigDict(extra="forbid")

    type: Literal["zero", "modal_list", "pointwise_expr", "random"] = "zero"
    modes: List[Tuple[int, float]] = Field(default_factory=list)
    expr: Optional[str] = None
    scale: float = 1.0

    @model_validator(mode="after")
    def check_payload(self):
        if self.type == "pointwise_expr" and not self.expr:
            raise ValueError("pointwise_expr fields need 'expr'")
        return self


# -------------------- Kernel Models --------------------

class SeparableTerm(BaseModel):
    """One term weight * left(x) * right(y) of a separable kernel K(x, y)."""
    model_config = ConfigDict(extra="forbid")

    left: str
    right: str
    weight: Union[float, str] = 1.0


class KernelSpec(BaseModel):
    """
    Anti-damping kernel.
    matrix_file accepts plain-text row-major matrices or the NLWKERN1 binary layout.
    """
    model_config = ConfigDict(extra="forbid")

    type: Literal["zero", "separable", "matrix_file"] = "zero"
    terms: List[SeparableTerm] = Field(default_factory=list)
    path: Optional[str] = None
    scale: float = 1.0

    @model_validator(mode="after")
    def check_payload(self):
        if self.type == "separable" and not self.terms:
            raise ValueError("separable kernels need at least one term")
        if self.type == "matrix_file" and not self.path:
            raise ValueError("matrix_file kernels need 'path'")
        return self


# -------------------- Nonlinearity Models --------------------

class NonlinearitySpec(BaseModel):
    """
    Source term f with primitive F.
    odd_polynomial: coeffs = [c1, c3, c5, ...] for f(s) = c1 s + c3 s^3 + ...
    custom_pointwise: f and F expressions in s (df optional, else numerical).
    """
    model_config = ConfigDict(extra="forbid")

    kind: Literal["zero", "odd_polynomial", "custom_pointwise"] = "zero"
    coeffs: List[float] = Field(default_factory=list)
    f: Optional[str] = None
    F: Optional[str] = None
    df: Optional[str] = None
    N: int = 3
    mu: Optional[float] = None

    @field_validator("N")
    @classmethod
    def check_dimension(cls, value):
        if value < 3:
            raise ValueError("analytic dimension N must be at least 3")
        return value

    @model_validator(mode="after")
    def check_payload(self):
        if self.kind == "custom_pointwise" and (not self.f or not self.F):
            raise ValueError("custom_pointwise nonlinearities must supply both f and F")
        if self.kind == "odd_polynomial" and not self.coeffs:
            raise ValueError("odd_polynomial needs at least one coefficient")
        return self


# -------------------- Config Sections --------------------

class BasisSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dim: Literal[1, 2] = 1
    modes: int = Field(32, ge=1)
    lengths: List[Union[float, str]] = Field(default_factory=lambda: ["pi"])
    dealias: float = Field(2.0, ge=1.5)


class PhysicsSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    k: float = Field(1.0, ge=0.0)
    p: float = Field(2.0, gt=0.0)
    kernel: KernelSpec = Field(default_factory=KernelSpec)
    h: FieldSpec = Field(default_factory=FieldSpec)
    nonlinearity: NonlinearitySpec = Field(default_factory=NonlinearitySpec)


class StepSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dt: float = Field(1e-2, gt=0.0)
    scheme: Literal["strang"] = "strang"
    damping_rule: Literal["exact", "implicit_euler"] = "exact"
    kernel_rule: Literal["exponential", "frozen"] = "exponential"
    radial_tol: float = Field(1e-13, gt=0.0)
    radial_max_iter: int = Field(200, ge=1)


class InitialSpec(BaseModel):
    """Initial state: fixed-seed random (1/j decay, scaled to `energy`) or explicit fields."""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["random", "fields"] = "random"
    energy: float = Field(1.0, ge=0.0)
    u: FieldSpec = Field(default_factory=FieldSpec)
    v: FieldSpec = Field(default_factory=FieldSpec)


class RunSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    T: float = Field(10.0, ge=0.0)
    observe_every: int = Field(1, ge=1)
    snapshot_every: int = Field(10, ge=1)
    epsilon: Optional[float] = Field(None, ge=0.0)
    tail_cutoff: Optional[int] = Field(None, ge=0)
    initial: InitialSpec = Field(default_factory=InitialSpec)
    # quadratic energy of a random perturbation tracked alongside the run (pair_E column)
    companion_energy: Optional[float] = Field(None, gt=0.0)


class SweepSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scales: List[float] = Field(default_factory=lambda: [1.0, 10.0, 100.0])
    T: float = Field(200.0, gt=0.0)
    burn_in: Optional[float] = Field(None, ge=0.0)

    @field_validator("scales")
    @classmethod
    def check_scales(cls, value):
        if len(value) < 2 or any(s <= 0 for s in value):
            raise ValueError("sweeps need at least two positive scales")
        return value


class PairSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    count: int = Field(2, ge=2)
    energy: float = Field(1.0, gt=0.0)
    T_list: List[float] = Field(default_factory=lambda: [10.0, 100.0])

    @field_validator("T_list")
    @classmethod
    def check_increasing(cls, value):
        if not value or any(b <= a for a, b in zip(value, value[1:])) or value[0] < 0:
            raise ValueError("T_list must be non-empty, non-negative and strictly increasing")
        return value


class ResolventSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    f0: FieldSpec = Field(default_factory=lambda: FieldSpec(type="random"))
    f1: FieldSpec = Field(default_factory=lambda: FieldSpec(type="random"))
    tol: float = Field(1e-10, gt=0.0)


class VerifySpec(BaseModel):
    """Sample sizes of the property suite."""
    model_config = ConfigDict(extra="forbid")

    monotonicity_pairs: int = Field(100_000, ge=10)
    random_vectors: int = Field(1000, ge=10)
    kernel_samples: int = Field(10_000, ge=10)
    radial_grid: int = Field(1000, ge=10)
    resolvent_problems: int = Field(100, ge=1)
    refinement_T: float = Field(1.0, gt=0.0)


class RunConfig(BaseModel):
    """Top-level experiment config file."""
    model_config = ConfigDict(extra="forbid")

    basis: BasisSpec = Field(default_factory=BasisSpec)
    physics: PhysicsSpec = Field(default_factory=PhysicsSpec)
    step: StepSpec = Field(default_factory=StepSpec)
    run: RunSpec = Field(default_factory=RunSpec)
    sweep: SweepSpec = Field(default_factory=SweepSpec)
    pair: PairSpec = Field(default_factory=PairSpec)
    resolvent: ResolventSpec = Field(default_factory=ResolventSpec)
    verify: VerifySpec = Field(default_factory=VerifySpec)


# -------------------- Record Models --------------------

RECORD_COLUMNS = [
    "t", "E_total", "E_kin", "E_el", "E_pot", "E_force",
    "l2_u", "l2_v", "h1_u", "V_eps", "resid", "tail_frac",
]
PAIR_COLUMN = "pair_E"


class ObservationRecord(BaseModel):
    """
    One row of records.csv. Column order is RECORD_COLUMNS, then pair_E when a
    companion trajectory is tracked.
    """
    t: float
    E_total: float
    E_kin: float
    E_el: float
    E_pot: float
    E_force: float
    l2_u: float
    l2_v: float
    h1_u: float
    V_eps: float
    resid: float
    tail_frac: float
    pair_E: Optional[float] = None


class RunManifest(BaseModel):
    """
    Reproducibility record of one experiment.
    """
    subcommand: str
    config_digest: str
    basis: Dict[str, object]
    step: Dict[str, object]
    seed: int
    code_version: str
    outputs: List[str] = Field(default_factory=list)
    wall_clock_seconds: float = 0.0
    config: Dict[str, object] = Field(default_factory=dict)
    status: str = "ok"
    message: Optional[str] = None


# -------------------- Report Models --------------------

class AssumptionReport(BaseModel):
    growth_constant: float
    mu_estimate: float
    lambda_1: float
    dissipative: bool
    mu_declared: Optional[float] = None
    sample_range: float
    sample_count: int
    warnings: List[str] = Field(default_factory=list)


class LipschitzReport(BaseModel):
    max_ratio: float
    samples: int
    radius: float


class TrajectorySettling(BaseModel):
    scale: float
    initial_norm: float
    tail_sup: Optional[float] = None
    last_half_sup: Optional[float] = None
    last_quarter_sup: Optional[float] = None
    stabilized: bool = False
    growing: bool = False
    settling_time: Optional[float] = None
    error: Optional[str] = None


class AbsorbingReport(BaseModel):
    conclusive: bool
    radius: Optional[float] = None
    spread: Optional[float] = None
    burn_in: float
    T: float
    trajectories: List[TrajectorySettling]
    message: str = ""


class PairContractionReport(BaseModel):
    T_list: List[float]
    matrices: List[List[List[Optional[float]]]]
    summary: List[Optional[float]]
    summary_rate: List[Optional[float]] = Field(default_factory=list)
    tail_fraction_initial: List[float]
    tail_fraction_final: List[Optional[float]]
    errors: Dict[int, str] = Field(default_factory=dict)


class SimulateReport(BaseModel):
    steps: int
    final_energy: float
    growth_rate: Optional[float] = None
    max_lyapunov_drift: Optional[float] = None
    final_pair_energy: Optional[float] = None
    failure: Optional[str] = None


class ResolventReport(BaseModel):
    sigma: float
    residual: float
    tol: float
    converged: bool


class CheckResult(BaseModel):
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    detail: str = ""


class VerifyReport(BaseModel):
    passed: bool
    checks: List[CheckResult]


# -------------------- API Models --------------------

class RunRequest(BaseModel):
    """Body of the POST /runs/* endpoints: a config, optional dotted overrides and the seed."""
    model_config = ConfigDict(extra="forbid")

    config: Dict[str, Any] = Field(default_factory=dict)
    overrides: List[str] = Field(default_factory=list)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    workers: int = Field(1, ge=1)


class RunResponse(BaseModel):
    run_id: str
    out_dir: str
    manifest: RunManifest
    report: Optional[Dict[str, Any]] = None
