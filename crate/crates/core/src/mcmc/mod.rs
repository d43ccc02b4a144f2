//! Gibbs sampler with Metropolis-Hastings steps for the Matérn parameters.
//!
//! One sweep updates, in order: the latent fields (and `V_0`, `mu` for AR),
//! `beta`, `rho` (AR), the three variances, then `phi` and `nu`. Unobserved
//! cells carry no likelihood term in the latent update; their values are
//! imputed afterwards from `N(V_t(s), sigma_eps2)`.

mod chain;
mod conditionals;
mod summary;

pub use chain::{
    initial_theta, pooled_pmcc, run_chain, run_chains, CellMoments, Chain, ChainConfig, Draw, DrawLatents, MhTuning,
};
pub use conditionals::{
    mh_step_phi_nu, sample_beta, sample_latents, sample_rho, sample_variances, truncated_normal_unit,
    GammaConditional, GaussianConditional, LatentDraw, MhOutcome, Sampler, VarianceConditionals,
};
pub use summary::{
    burn_in_mean, chains_from_draws, parameter_names, posterior_summary, quantile_sorted, read_draws_ndjson,
    summarize, write_draws_ndjson, write_summary_csv, ParamSummary,
};
