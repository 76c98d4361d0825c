//! Distance functions from closed sets on two-dimensional Riemannian charts.
//!
//! The crate computes the distance function `d_K` from a closed source set
//! `K` (points and closed curves) on a metric chart, by two independent
//! routes: normal geodesics shot from the unit normal bundle of `K`, and an
//! upwind fast-marching solver for the eikonal equation `|grad u|_g = 1`.
//! On top of these it locates first focal times along normal geodesics, cut
//! times and the cut locus, extracts the cut locus as a finite graph with
//! classified vertices, and measures structural properties of the singular
//! set (semiconcavity constants, superdifferential extremals, box-counting
//! dimension). A separate module constructs a planar convex body with
//! `C^{1,1}` boundary whose singular-set closure has positive area.

pub mod analysis;
pub mod counterexample;
pub mod cut;
pub mod eikonal;
pub mod expr;
pub mod geodesic;
pub mod graph;
pub mod jacobi;
pub mod metric;
pub mod scene;
pub mod source;

mod vec2;

pub use vec2::{Mat2, Point2, Vec2};
