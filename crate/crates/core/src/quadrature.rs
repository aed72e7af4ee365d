//! Gauss–Legendre quadrature over arc length.
//!
//! Every backbone integral in the crate (segment tip position, horizontal
//! coordinate, Jacobian integrals and partial integrals up to a marker) is
//! evaluated with one of these rules. Nodes and weights are computed once by
//! Newton iteration on the Legendre recurrence and then mapped to `[a, b]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NODE_COUNT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum QuadratureScheme {
    /// A single panel carrying all nodes.
    GaussLegendre,
    /// The interval split into equal panels, each with `node_count / panels` nodes.
    CompositeGaussLegendre { panels: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    node_count: usize,
    scheme: QuadratureScheme,
    // one panel, reference interval [-1, 1]
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self::gauss_legendre(DEFAULT_NODE_COUNT).expect("default node count is valid")
    }
}

impl Quadrature {
    pub fn new(node_count: usize, scheme: QuadratureScheme) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::Validation(format!(
                "quadrature needs at least 2 nodes, got {node_count}"
            )));
        }
        let per_panel = match scheme {
            QuadratureScheme::GaussLegendre => node_count,
            QuadratureScheme::CompositeGaussLegendre { panels } => {
                if panels == 0 || !node_count.is_multiple_of(panels) {
                    return Err(Error::Validation(format!(
                        "{node_count} nodes cannot be split evenly into {panels} panels"
                    )));
                }
                node_count / panels
            }
        };
        let (nodes, weights) = legendre_rule(per_panel);
        Ok(Self {
            node_count,
            scheme,
            nodes,
            weights,
        })
    }

    pub fn gauss_legendre(node_count: usize) -> Result<Self> {
        Self::new(node_count, QuadratureScheme::GaussLegendre)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn scheme(&self) -> QuadratureScheme {
        self.scheme
    }

    fn panels(&self) -> usize {
        match self.scheme {
            QuadratureScheme::GaussLegendre => 1,
            QuadratureScheme::CompositeGaussLegendre { panels } => panels,
        }
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn points(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let panels = self.panels();
        let width = (b - a) / panels as f64;
        (0..panels).flat_map(move |p| {
            let lo = a + width * p as f64;
            let half = 0.5 * width;
            let mid = lo + half;
            self.nodes
                .iter()
                .zip(&self.weights)
                .map(move |(&x, &w)| (mid + half * x, half * w))
        })
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.points(a, b).map(|(s, w)| w * f(s)).sum()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut derivative = 0.0;
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            derivative = dp;
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        if dp != 0.0 {
            derivative = dp;
        }
        let w = 2.0 / ((1.0 - x * x) * derivative * derivative);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let k = k as f64;
        let next = ((2.0 * k - 1.0) * x * p - (k - 1.0) * p_prev) / k;
        p_prev = p;
        p = next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}
