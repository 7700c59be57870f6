//! Numerical tolerances shared by the solver and the certifier.

/// Relative width at which bisection brackets stop.
pub const ROOT_REL_TOL: f64 = 1e-12;

/// Absolute width for roots on the unit interval.
pub const ROOT_ABS_TOL: f64 = 1e-13;

/// Guard kept between a bracket and an open endpoint.
pub const ENDPOINT_GUARD: f64 = 1e-10;

/// Slack allowed on structural equalities such as G(v_H) = F(v_H).
pub const STRUCT_TOL: f64 = 1e-9;

/// Slack on the two closed-form routes to the slope.
pub const BETA_ROUTE_TOL: f64 = 1e-8;

/// Slack on the integral identities of the certificate.
pub const INTEGRAL_TOL: f64 = 1e-8;

/// Slack used when reading the sign of Z at a regime boundary.
pub const Z_TIE_TOL: f64 = 1e-11;

/// Iteration cap for every bisection loop.
pub const MAX_BISECTIONS: usize = 200;

/// Cap on bracket doublings.
pub const MAX_DOUBLINGS: usize = 200;
