//! Node values in double-double arithmetic, for recurrences whose rounding
//! errors would otherwise be amplified into the growing solution.

use std::sync::Arc;

use twofloat::TwoFloat;

use crate::recurrence::{NodeValues, RecurrenceSpace};

#[derive(Debug, Clone)]
pub(crate) struct CompensatedValues {
    nodes: Arc<[f64]>,
    n: usize,
    values: Vec<TwoFloat>,
}

impl CompensatedValues {
    pub(crate) fn constant(nodes: Arc<[f64]>, v: &[f64]) -> Self {
        let values = nodes.iter().flat_map(|_| v.iter().map(|&x| TwoFloat::from(x))).collect();
        Self { n: v.len(), nodes, values }
    }

    pub(crate) fn n(&self) -> usize {
        self.n
    }

    /// The `n` components at node `l`.
    pub(crate) fn at(&self, l: usize) -> &[TwoFloat] {
        &self.values[l * self.n..(l + 1) * self.n]
    }

    pub(crate) fn rounded(&self) -> NodeValues {
        NodeValues::new(self.nodes.clone(), self.n, self.values.iter().map(|v| v.hi() + v.lo()).collect())
    }
}

impl RecurrenceSpace for CompensatedValues {
    fn zero_like(&self) -> Self {
        Self { nodes: self.nodes.clone(), n: self.n, values: vec![TwoFloat::from(0.0); self.values.len()] }
    }

    fn shifted(&self) -> Self {
        let mut out = self.clone();
        for (l, &x) in self.nodes.iter().enumerate() {
            for v in &mut out.values[l * self.n..(l + 1) * self.n] {
                *v *= x;
            }
        }
        out
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        for (d, s) in self.values.iter_mut().zip(&x.values) {
            *d += *s * a;
        }
    }

    fn scale_mut(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    fn div_mut(&mut self, c: f64) {
        for v in &mut self.values {
            *v /= c;
        }
    }

    fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.hi().is_finite() && v.lo().is_finite())
    }
}
