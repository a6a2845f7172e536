//! Exact symbolic calculus for weakly nonlocal Hamiltonian operators.
//!
//! The crate decides, by exact symbolic computation, whether a weakly
//! nonlocal differential operator
//!
//! ```text
//! P^ij = sum_sigma B^{ij sigma} Dx^sigma
//!      + sum_{alpha,beta} c^{alpha beta} w^i_alpha Dx^{-1} w^j_beta
//! ```
//!
//! is Hamiltonian ([P,P] = 0) and whether two such operators are compatible
//! ([P,Q] = 0), where [.,.] is the Schouten bracket. Two independent engines
//! compute the bracket and are cross-checked against each other:
//!
//! * [`opform`] works with operator symbols: covectors psi^a and nonlocal
//!   symbols tpsi^a_alpha = Dx^{-1}(w^i_alpha psi^a_i), normalizing the
//!   bracket by integration by parts into a canonical trilinear form;
//! * [`distform`] works with three-point distribution kernels built from
//!   delta derivatives and the skew Heaviside kernel nu(s) = sgn(s)/2,
//!   reducing products by exact distributional identities.
//!
//! Everything is computed over exact rational arithmetic: coefficients are
//! canonical rational functions of jet variables ([`jet::JetExpression`]),
//! so a zero verdict is a proof of vanishing in this formalism, not a
//! numerical statement.
//!
//! Supporting layers: [`poly`] (sparse multivariate polynomial kernel),
//! [`calculus`] (variational derivative, formal adjoint, linearization, total
//! derivative inversion), [`op`] (the operator data type and its validation),
//! and [`frontend`] (expression grammar, problem files, reports).

pub mod calculus;
pub mod distform;
pub mod frontend;
pub mod jet;
pub mod multivector;
pub mod op;
pub mod opform;
pub mod poly;

pub use jet::JetExpression;
pub use op::WeaklyNonlocalOperator;
pub use poly::{Point, Poly, Var};
