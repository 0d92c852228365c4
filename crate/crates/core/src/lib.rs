//! Two-view reconstruction of the 3D centerline of a slender continuum body
//! (guidewire, catheter) from calibrated binary masks.
//!
//! Pipeline: [`skeleton::skeletonize`] → [`centerline::extract_centerline`] →
//! [`gctt::order_views`] (ordering each view's skeleton) →
//! [`ecdp`] (epipolar dynamic-programming correspondence and triangulation).
//! [`synth`] renders ground-truth scenes and [`metrics`] scores the result.
//! [`pipeline`] runs the stages from one JSON configuration and [`bench`]
//! evaluates batches of synthetic scenes.
//!
//! The geometric core is generic over the scalar type through [`Real`]
//! (implemented for `f32` and `f64`); the aliases below fix it to `f64`.

pub mod bench;
pub mod calib;
pub mod camera;
pub mod centerline;
pub mod csvio;
pub mod ecdp;
pub mod gctt;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod skeleton;
pub mod synth;

pub use scalar::Real;

pub type PixelPointF64 = camera::PixelPoint<f64>;
pub type PixelPointF32 = camera::PixelPoint<f32>;
pub type WorldPointF64 = camera::WorldPoint<f64>;
pub type WorldPointF32 = camera::WorldPoint<f32>;
pub type CameraF64 = camera::Camera<f64>;
pub type StereoRigF64 = camera::StereoRig<f64>;
pub type StereoRigF32 = camera::StereoRig<f32>;
pub type GcttParamsF64 = gctt::GcttParams<f64>;
pub type OrderedSequenceF64 = gctt::OrderedSequence<f64>;
pub type OrderedSequenceF32 = gctt::OrderedSequence<f32>;
pub type CostMatrixF64 = ecdp::CostMatrix<f64>;
pub type CorrespondenceSetF64 = ecdp::CorrespondenceSet<f64>;
pub type Curve3DF64 = ecdp::Curve3D<f64>;
pub type Curve3DF32 = ecdp::Curve3D<f32>;
