//! Simulation and verification toolkit for iterated function systems of
//! diffeomorphisms on the circle and the 2-sphere, viewed as skew products
//! over Bernoulli shifts.
//!
//! The crate provides:
//!
//! * [`geometry`] — points, tangent frames, and a catalog of circle/sphere
//!   diffeomorphisms with closed-form tangent maps and noise carriers;
//! * [`driving`] — Bernoulli words, the generalized Baker map, and the
//!   itinerary encodings semi-conjugating the shift to the Baker map;
//! * [`cocycle`] — fiber iteration along words, reversed (pull-back)
//!   composition, and the QR derivative cocycle;
//! * [`measures`] — empirical measures, Ulam discretization of the transfer
//!   operator, stationary measures, and measure distances;
//! * [`analysis`] — Lyapunov exponents, pull-back atoms, synchronization
//!   statistics, minimality/covering/isolation checks, uniqueness probes;
//! * [`config`] and [`run`] — the strict JSON experiment configuration and
//!   the deterministic experiment runner behind the `ifs-sync` binary.
//!
//! Everything is driven by a splittable deterministic RNG ([`rng`]); runs
//! with identical configuration and seed produce bit-identical reports at
//! any worker count.

pub mod analysis;
pub mod cocycle;
pub mod config;
pub mod driving;
pub mod geometry;
pub mod measures;
pub mod rng;
pub mod run;
