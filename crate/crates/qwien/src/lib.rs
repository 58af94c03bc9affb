//! Multislice simulation of electron spin filtering in multipolar Wien filters.
//!
//! A spinor electron beam is carried through slices of a compensated crossed-field element
//! whose transverse magnetic field has a topological charge. Each slice imprints the
//! residual scalar phase, rotates the spin with the local transverse field and, in fringe
//! regions, translates the wave along the transverse vector potential; free-space Fresnel
//! propagation connects the slices.

pub mod analysis;
pub mod error;
pub mod fft2;
pub mod fields;
pub mod kinematics;
pub mod propagation;
pub mod spline;
pub mod wavefield;

pub use error::{Error, Result};
pub use fields::{FieldSample, MultipoleFilter, Region, SliceIntegrals};
pub use kinematics::{beam_params, BeamParams, PhysicalConstants};
pub use propagation::{
    far_field, far_field_zoomed, fresnel_propagate, interaction_phase, pauli_step, run_multislice, translate_step,
    PropagatorKernel, RunOptions, Slice, SliceScheme,
};
pub use wavefield::{azimuthal_spectrum, make_lg_beam, mixed_state_average, total_norm, Grid, LgParams, Space, Spin, SpinorField};
