pub mod closure;
pub mod counterexamples;
pub mod intersect;
pub mod lens;
pub mod manifold;
pub mod suite;
