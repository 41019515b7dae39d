//! Monte Carlo estimators for the resolvent, heat kernel, Green function,
//! ergodic averages and Dirichlet quotient of Liouville Brownian motion.

mod averages;
mod green;
mod heat;
mod report;
mod resolvent;
mod trig;

pub use averages::{cosine_quotient_exact, dirichlet_quotient, ergodic_average, DirichletEstimate, ErgodicRun};
pub use green::{green_apply, green_kernel_torus, occupation_integral, GreenTable};
pub use heat::{
    chapman_kolmogorov_check, heat_kernel, heat_kernel_symmetry, heat_kernel_times, wrapped_gaussian_bins,
    ChapmanReport, KernelEstimate, Start, SymmetryReport, SymmetryRow, MASS_FLOOR,
};
pub use report::{write_csv_block, Summary};
pub use resolvent::{
    resolvent, resolvent_identity, resolvent_modulus, resolvent_symmetry, IdentityReport, IdentityRow,
    ModulusFit, PairedReport, ResolventEstimate, ResolventOptions,
};
pub use trig::{TrigPolynomial, TrigTerm};

use crate::grid::{GridFunction, TorusPoint};

/// A bounded function on the torus that estimators integrate along paths.
pub trait Observable: Sync {
    fn eval(&self, p: TorusPoint) -> f64;
    /// An upper bound on `sup |f|`.
    fn sup(&self) -> f64;
}

impl Observable for GridFunction {
    #[inline]
    fn eval(&self, p: TorusPoint) -> f64 {
        self.value_at(p)
    }

    fn sup(&self) -> f64 {
        self.sup_norm()
    }
}

impl Observable for TrigPolynomial {
    #[inline]
    fn eval(&self, p: TorusPoint) -> f64 {
        self.value(p)
    }

    fn sup(&self) -> f64 {
        self.sup_bound()
    }
}

#[cfg(test)]
mod tests;
