use std::ops::Range;

/// Index map of the solver state.
///
/// Each process block is ordered derivative-major: value block, first
/// derivative block, and so on. Inside a derivative block fields are stacked
/// field-major, each holding one entry per grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub fields: usize,
    /// Grid values per field carried by the `U` process.
    pub points: usize,
    pub nu: usize,
    pub has_xi: bool,
    /// Boundary points carried by the latent boundary force (0 when absent).
    pub theta_points: usize,
}

impl StateLayout {
    fn u_width(&self) -> usize {
        self.fields * self.points
    }

    fn theta_width(&self) -> usize {
        self.fields * self.theta_points
    }

    pub fn u_dim(&self) -> usize {
        (self.nu + 1) * self.u_width()
    }

    pub fn xi_dim(&self) -> usize {
        if self.has_xi { self.u_dim() } else { 0 }
    }

    pub fn theta_dim(&self) -> usize {
        (self.nu + 1) * self.theta_width()
    }

    pub fn dim(&self) -> usize {
        self.u_dim() + self.xi_dim() + self.theta_dim()
    }

    /// `deriv`-th derivative of all fields of `U`.
    pub fn u(&self, deriv: usize) -> Range<usize> {
        let w = self.u_width();
        deriv * w..(deriv + 1) * w
    }

    pub fn xi(&self, deriv: usize) -> Option<Range<usize>> {
        let w = self.u_width();
        let base = self.u_dim();
        self.has_xi.then(|| base + deriv * w..base + (deriv + 1) * w)
    }

    pub fn theta(&self, deriv: usize) -> Option<Range<usize>> {
        let w = self.theta_width();
        let base = self.u_dim() + self.xi_dim();
        (w > 0).then(|| base + deriv * w..base + (deriv + 1) * w)
    }
}
