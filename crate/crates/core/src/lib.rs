//! Adversarial influence functions for robust estimators.
//!
//! The crate covers the full pipeline for scalar M- and L-estimators:
//!
//! * [`m_estimator`]: ψ-functions, the estimating-equation solver and the
//!   per-sample sensitivity `dT_N/dx_n`;
//! * [`attack`]: the attacker's optimal `l_p`-budgeted perturbation, the
//!   fixed-sample AIF and a brute-force oracle;
//! * [`population`]: population AIF, influence function and gross-error
//!   sensitivity by quadrature, plus Monte Carlo convergence studies;
//! * [`design`]: minimum-AIF estimators and AIF/IF tradeoff designs;
//! * [`l_estimator`]: weights, estimates and AIF of L-estimators;
//! * [`distributions`] and [`quad`]: the numerical substrate.

pub mod attack;
pub mod design;
pub mod distributions;
pub mod error;
pub mod l_estimator;
pub mod m_estimator;
pub mod norm;
pub mod population;
pub mod quad;

pub use attack::{
    aif_empirical, aif_finite_eta, brute_force_attack, optimal_attack, AifMethod, AifReport,
    AttackPlan, Diagnostic,
};
pub use design::{
    exponential_tradeoff, min_aif_location, min_aif_scale, smallest_feasible_xi, tradeoff_curve,
    tradeoff_location, tradeoff_scale, CurveRow, DesignKind, DesignedPsi, KktMultipliers,
    KktReport,
};
pub use distributions::{DistributionModel, Tabulated};
pub use error::{Error, Result};
pub use l_estimator::{
    l_aif, l_estimate, ordering_safety_threshold, weights_from_h, LWeights, WeightSource,
};
pub use m_estimator::{
    builtin_psi, sensitivity, solve, BuiltinPsi, Estimator, MEstimate, Profile, PsiKind, PsiSpec,
    Sensitivity,
};
pub use norm::NormOrder;
pub use population::{
    aif_convergence_study, aif_population, gross_error_sensitivity, influence_function,
    ConvergenceRow, PopulationContext,
};
pub use quad::QuadOptions;
