//! Numerical versions of the renormalization-group flows, interaction
//! scales, sine-Gordon domain wall and phase boundary.

mod boundary;
mod flows;
mod kink;
mod yhf;

pub use boundary::{interaction_scales, phase_boundary, BoundaryPoint, InteractionScales, PhaseBoundaryOptions};
pub use flows::{
    bkt_constant, bkt_g_infinity, flow_bkt, flow_bkt_banded, flow_free, flow_interacting, BktFlow, BktSide, FlowCurve, FreeFlow,
    FreeFlowOptions, InteractingFlow, InteractingRegime, BKT_SEPARATRIX, G_C,
};
pub use kink::{sine_gordon_kink, KinkOptions, KinkSolution};
pub use yhf::{i0, i1, i_tau, i_tau_asymptotic, yhf, YhfIntegrator};

/// Relative tolerance of all RG flow integrations.
pub const FLOW_RTOL: f64 = 1e-10;
