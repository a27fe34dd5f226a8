//! Irreducible and cone-confined weight tables and the renewal structure
//! they generate.

mod law;
mod quenched;
mod table;

pub use law::{
    annealed_lln_clt_check, legendre_rate, local_limit_check, renewal_limit, solve_mu, solve_mu_complex, CltReport,
    CltRow, EffectiveStepLaw, LocalLimitPoint, LocalLimitReport, MuDerivatives, RenewalAsymptotics,
};
pub use quenched::{quenched_irreducible_inversion, ConeShapes, InversionReport, QuenchedKernels, Shape};
pub use table::{
    build_irreducible_tables, calibrate_lambda, convolve_tables, decomposition_completeness, Calibration,
    CompletenessRow, Entry, IrreducibleTable, KernelTable, TableSource,
};
