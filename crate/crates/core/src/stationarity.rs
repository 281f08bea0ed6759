use std::fmt;

/// Residual norms of an optimality system plus pointwise sign-condition
/// bookkeeping. All residuals are sup norms over nodes and steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StationarityReport {
    pub residuals: Vec<(String, f64)>,
    /// Node-steps (or sampled directions) violating the sign condition.
    pub sign_violations: usize,
    /// The part of `sign_violations` located on biactive node-steps.
    pub biactive_sign_violations: usize,
    /// Node-steps where the max/projection argument sits on its kink.
    pub biactive_count: usize,
    /// `L²(0,T;L²)` norm of the reduced gradient, when one is available.
    pub gradient_norm: Option<f64>,
    /// Smallest sampled directional derivative of the reduced objective.
    pub bstat_min: Option<f64>,
    /// Set when biactivity means only directional checks are meaningful.
    pub directional_only: bool,
}

impl StationarityReport {
    pub fn push(&mut self, name: &str, value: f64) {
        self.residuals.push((name.to_string(), value));
    }

    pub fn residual(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, (_, v)| m.max(*v))
    }

    /// Absorbs the entries of `other`, keeping existing names.
    pub fn merge(&mut self, other: StationarityReport) {
        for (n, v) in other.residuals {
            if self.residual(&n).is_none() {
                self.residuals.push((n, v));
            }
        }
        self.sign_violations += other.sign_violations;
        self.biactive_sign_violations += other.biactive_sign_violations;
        self.biactive_count = self.biactive_count.max(other.biactive_count);
        self.gradient_norm = self.gradient_norm.or(other.gradient_norm);
        self.bstat_min = self.bstat_min.or(other.bstat_min);
        self.directional_only |= other.directional_only;
    }
}

impl fmt::Display for StationarityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, v) in &self.residuals {
            writeln!(f, "residual.{n} = {v:e}")?;
        }
        writeln!(f, "sign_violations = {}", self.sign_violations)?;
        writeln!(f, "biactive_sign_violations = {}", self.biactive_sign_violations)?;
        writeln!(f, "biactive_count = {}", self.biactive_count)?;
        if let Some(g) = self.gradient_norm {
            writeln!(f, "gradient_norm = {g:e}")?;
        }
        if let Some(b) = self.bstat_min {
            writeln!(f, "bstat_min = {b:e}")?;
        }
        writeln!(f, "directional_only = {}", self.directional_only)
    }
}
