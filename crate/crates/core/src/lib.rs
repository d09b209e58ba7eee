//! Two-hop 2×2 interference channel with scalar, time-varying
//! amplify-forward relays.
//!
//! - [`channel_model`]: gains, genericity checks, end-to-end matrices.
//! - [`af_scheme`]: the three-phase scheme reaching 4/3 sum-DoF, its
//!   reconstruction and rates, and a time-sharing baseline.
//! - [`link_simulator`]: Monte Carlo simulation of the relay chain and
//!   DoF slope fitting.
//! - [`outer_bound`]: state census, bound evaluation and a Gaussian checker
//!   for the entropy inequality behind the converse.
//! - [`cli`]: the `afdof` command-line experiments.
//!
//! The guide in `book/` walks through each piece; its code listings are
//! compiled and run as doctests of this crate.
//!
//! ```
//! use afdof::prelude::*;
//!
//! let ch = ChannelRealization::new([1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 2.0, 1.0])?;
//! let plan = PhasePlan::for_channel(&ch)?;
//! let v = analytic_noise_variances(&ch, &plan)?;
//! let r = rates_from_variances(1e6, &v)?;
//! assert!(r.sum() > 2.0 * baseline_tdma_rate(&ch, 1e6)?.0);
//! # Ok::<(), afdof::Error>(())
//! ```

pub mod af_scheme;
pub mod channel_model;
pub mod cli;
mod error;
pub mod link_simulator;
pub mod outer_bound;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::af_scheme::{
        achievable_rate, analytic_noise_variances, baseline_tdma_rate, rates_from_variances,
        reconstruct_d1, reconstruct_d2, AfAlphabet, AfPair, AfSchedule, Phase, PhasePlan,
        RateReport, StreamVariances,
    };
    pub use crate::channel_model::{
        ChannelRealization, ConditionReport, Destination, EndToEndMatrix, DEFAULT_REL_TOL,
    };
    pub use crate::link_simulator::{
        estimate_dof_slope, estimate_mse, estimate_relay_power, relay_schedule, simulate_block,
        simulate_shortcut, NoiseBlock, SimConfig, SlopeFit, SourceSymbols, DEFAULT_POWER_GRID,
    };
    pub use crate::outer_bound::{
        bound_constants, census, check_lemma2, classify_state, evaluate_bounds,
        gaussian_entropy, min_census_fraction, CensusSet, StateCensus, StateLabel,
        STATE_REL_TOL,
    };
    pub use crate::{Error, Result};
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel-model.md")]
    mod channel_model {}
    #[doc = include_str!("../../../book/src/scheme.md")]
    mod scheme {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/outer-bound.md")]
    mod outer_bound {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
