/// Flat access to the trainable parameters of a model.
///
/// Gradients are stored in a value of the same type, so optimizers and the
/// gradient checker can walk parameters and gradients in lockstep.
pub trait Params {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;
    fn names(&self) -> Vec<String>;
    fn zeros_like(&self) -> Self
    where
        Self: Sized;

    /// Called by optimizers after an update.
    fn mark_updated(&mut self) {}

    fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// `self += other`, elementwise.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (d, s) in self.slices_mut().into_iter().zip(other.slices()) {
            for (a, b) in d.iter_mut().zip(s) {
                *a += b;
            }
        }
    }
}

pub(crate) fn prefixed(prefix: &str, names: Vec<String>) -> impl Iterator<Item = String> + '_ {
    names.into_iter().map(move |n| format!("{prefix}.{n}"))
}

/// Overwrites every parameter with a draw from `U(-bound, bound)`.
pub fn fill_uniform<P: Params, R: rand::Rng + ?Sized>(model: &mut P, rng: &mut R, bound: f64) {
    for s in model.slices_mut() {
        for v in s.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
    }
}
