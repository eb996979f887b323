"""Simulation and neural modeling of stochastic Volterra equations.

The package splits into a solver side (grids, Brownian drivers, the
weighted Euler scheme, benchmark equations) and a learning side (a small
reverse-mode autodiff engine, the neural Volterra model, a neural SDE
and a DeepONet baseline, the training pipeline, and a perturbation-
stability lab).  The ``volterra-net`` command drives everything from
JSON configs; see the README for the narrative scripts in demos/.
"""

from .autodiff import (
    AdamState,
    MlpSpec,
    ParamVector,
    Tape,
    adam_step,
    backward,
    build_param_vector,
    init_uniform,
    lipswish,
    load_params,
    mlp_forward,
    save_params,
    sigmoid,
)
from .baselines import (
    DeepOnetModel,
    NeuralSdeModel,
    deeponet_forward,
    init_deeponet,
    init_sde_model,
    nsde_forward,
)
from .errors import (
    BadDims,
    ConfigParseError,
    DegenerateFit,
    DimMismatch,
    DivergedLoss,
    GridMismatch,
    IncommensurateGrid,
    IndivisibleFactor,
    NonFinitePath,
    NonPositiveInput,
    NonScalarLoss,
    NumericalError,
    OutputExists,
    ShapeMismatch,
    SingularAtZero,
    ValidationError,
    VolterraNetError,
    ZeroTargetNorm,
)
from .experiments import (
    EXPERIMENT_NAMES,
    DeterministicIc,
    ExperimentSpec,
    LossReport,
    NormalIc,
    TrainConfig,
    build_experiment,
    default_epochs,
    evaluate,
    generate_dataset,
    train,
    write_report,
)
from .model_io import load_model, save_model
from .nsve import (
    KernelTable,
    NeuralSveModel,
    init_model,
    kernel_table,
    nsve_forward,
)
from .paths import (
    BrownianPath,
    PathDataset,
    SamplePath,
    TimeGrid,
    coarsen_brownian,
    derive_seed,
    load_brownian,
    load_sample_path,
    make_uniform_grid,
    mean_relative_l2,
    path_norm,
    relative_l2_batch,
    rng_from,
    sample_brownian,
    save_brownian,
    save_sample_path,
)
from .solver import (
    AffineReversion,
    CoefficientFn,
    ConstantCoeff,
    ConstantKernel,
    ExponentialKernel,
    IdentityCoeff,
    Kernel,
    LinearLagKernel,
    PiecewiseSignKernel,
    PowerGammaKernel,
    ShiftedCoeff,
    ShiftedKernel,
    SmoothedSqrtAbs,
    SqrtAbsCoeff,
    SveProblem,
    euler_maruyama,
    exp_decay_g,
    kernel_eval,
    simulate_paths,
    unit_g,
)
from .stability import (
    CHANNELS,
    PerturbationPlan,
    StabilityResult,
    lipschitz_ou_problem,
    make_default_plan,
    norm_factor,
    perturbed_problem,
    stability_scan,
    write_stability,
)

__version__ = "0.1.0"
