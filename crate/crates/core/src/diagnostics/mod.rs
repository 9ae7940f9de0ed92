//! Plasticity measurement suite.
//!
//! Per visit: the l2 weight change from the visit's first frame to its
//! halfway frame, per-layer gradient l0/l1/l2 norms averaged over the 100
//! updates that follow the halfway frame, post-activation l0 fractions over
//! the same 100 mini-batches, and the mean sampled loss at the halfway
//! point. Series are normalized per layer by their first-visit value and
//! aggregated across layers weighted by each layer's weight count (unit
//! count for activations).
//!
//! Every probe is read-only with respect to the agent and the buffer; the
//! gradient/activation probes observe the training stream, they do not add
//! updates to it.

mod probe;
mod report;

pub use probe::{
    activation_l0, loss_probe, snapshot_weights, weight_change, LayerGradNorms, ProbeSettings,
    SiteActivationStats, VisitProbe, VisitProbeBuilder,
};
pub use report::{DiagnosticsReport, NormStat};
