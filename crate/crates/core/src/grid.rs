//! Quadrature grids on which every integral operator is discretized.
//!
//! The radial grid is cell-centred: node `i` sits at the midpoint of the shell
//! `[i h, (i+1) h]` and carries the exact shell volume as its weight, so the
//! weights sum to the ball volume up to round-off.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    edges: Vec<f64>,
    r_max: f64,
}

impl RadialGrid {
    /// `n` equal shells covering the ball of radius `r_max`.
    pub fn uniform(n: usize, r_max: f64) -> Result<Self> {
        if n == 0 || !(r_max > 0.0) || !r_max.is_finite() {
            return Err(LabError::InvalidArgument(format!(
                "radial grid needs n > 0 and r_max > 0 (got n = {n}, r_max = {r_max})"
            )));
        }
        let h = r_max / n as f64;
        let edges: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        let nodes = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        let weights = edges
            .windows(2)
            .map(|e| 4.0 * PI / 3.0 * (e[1].powi(3) - e[0].powi(3)))
            .collect();
        Ok(Self {
            nodes,
            weights,
            edges,
            r_max,
        })
    }

    /// Grid with spacing at most `h` out to `r_max`.
    pub fn with_spacing(h: f64, r_max: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(LabError::InvalidArgument(format!("spacing must be positive, got {h}")));
        }
        Self::uniform((r_max / h).ceil() as usize, r_max)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Shell boundaries, `len() + 1` values from 0 to `r_max`.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn spacing(&self) -> f64 {
        self.r_max / self.len() as f64
    }

    pub fn volume(&self) -> f64 {
        4.0 * PI / 3.0 * self.r_max.powi(3)
    }

    /// Discrete L¹ norm of a radial field.
    pub fn l1_norm(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(v, w)| v.abs() * w).sum()
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(v, w)| v * v * w).sum::<f64>().sqrt()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&r| f(r)).collect()
    }

    /// Linear interpolation of a nodal field at radius `r`; constant
    /// extension towards the origin, zero beyond `r_max`.
    pub fn interpolate(&self, f: &[f64], r: f64) -> f64 {
        let h = self.spacing();
        if r > self.r_max {
            return 0.0;
        }
        let x = r / h - 0.5;
        if x <= 0.0 {
            return f[0];
        }
        let i = x.floor() as usize;
        if i + 1 >= f.len() {
            return f[f.len() - 1];
        }
        let t = x - i as f64;
        f[i] * (1.0 - t) + f[i + 1] * t
    }
}

/// Uniform cube `[-L, L]^3` with `count` nodes per axis (including both faces).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianGrid {
    h: f64,
    half_width: f64,
    count: usize,
}

impl CartesianGrid {
    pub fn new(count: usize, half_width: f64) -> Result<Self> {
        if count < 3 || !(half_width > 0.0) {
            return Err(LabError::InvalidArgument(format!(
                "cartesian grid needs count >= 3 and L > 0 (got {count}, {half_width})"
            )));
        }
        Ok(Self {
            h: 2.0 * half_width / (count - 1) as f64,
            half_width,
            count,
        })
    }

    /// Smallest odd node count giving spacing at most `h`.
    pub fn with_spacing(h: f64, half_width: f64) -> Result<Self> {
        let mut count = (2.0 * half_width / h).ceil() as usize + 1;
        if count.is_multiple_of(2) {
            count += 1;
        }
        Self::new(count, half_width)
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.count.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(3)
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.h
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.count + j) * self.count + k
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.count;
        let k = idx % n;
        let j = (idx / n) % n;
        let i = idx / (n * n);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.len()).map(move |idx| self.point(idx))
    }
}

pub fn norm3(x: [f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

pub fn dist3(x: [f64; 3], y: [f64; 3]) -> f64 {
    norm3([x[0] - y[0], x[1] - y[1], x[2] - y[2]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_weights_sum_to_ball_volume() {
        for &(n, r) in &[(7, 1.0), (200, 2.5), (2000, 2.0)] {
            let g = RadialGrid::uniform(n, r).unwrap();
            let total: f64 = g.weights().iter().sum();
            assert!((total / g.volume() - 1.0).abs() < 1e-12);
            assert!(g.weights().iter().all(|&w| w > 0.0));
            assert!(g.nodes().windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn cartesian_grid_is_symmetric() {
        let g = CartesianGrid::new(21, 2.0).unwrap();
        assert!((g.spacing() * 20.0 - 4.0).abs() < 1e-12);
        assert!((g.coord(0) + g.coord(20)).abs() < 1e-12);
        assert!(g.coord(10).abs() < 1e-12);
        let p = g.point(g.index(3, 10, 17));
        assert!((p[0] - g.coord(3)).abs() < 1e-15 && (p[2] - g.coord(17)).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(RadialGrid::uniform(0, 1.0).is_err());
        assert!(RadialGrid::uniform(10, -1.0).is_err());
        assert!(CartesianGrid::new(2, 1.0).is_err());
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let g = RadialGrid::uniform(50, 5.0).unwrap();
        let f = g.sample(|r| 2.0 * r + 1.0);
        for &r in &[0.2, 1.37, 4.9] {
            assert!((g.interpolate(&f, r) - (2.0 * r + 1.0)).abs() < 1e-12);
        }
    }
}
