//! Truncated integer lattices and the operators that act on them.
//!
//! A [`LatticeShape`] is the box `{ i ∈ ℤ^N : max_j |i_j| ≤ M }`. Sites are
//! enumerated lexicographically on `(i_1, …, i_N)` with the first axis most
//! significant, so site `k` of a one-dimensional lattice is `i = k − M`.
//! Every operator treats sites outside the box as zero.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeShape {
    dim: usize,
    radius: usize,
}

impl LatticeShape {
    /// `dim ≥ 1`; `radius = 0` is the single-site lattice.
    pub fn new(dim: usize, radius: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig(vec!["dim must be at least 1".into()]));
        }
        let shape = Self { dim, radius };
        if shape.checked_site_count().is_none() {
            return Err(Error::InvalidConfig(vec![format!(
                "lattice (dim {dim}, radius {radius}) is too large"
            )]));
        }
        Ok(shape)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Number of sites along one axis, `2M + 1`.
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    fn checked_site_count(&self) -> Option<usize> {
        let side = self.side();
        (0..self.dim).try_fold(1usize, |acc, _| acc.checked_mul(side))
    }

    pub fn site_count(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    /// Index distance between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.side().pow((self.dim - 1 - axis) as u32)
    }

    /// Box coordinate `c ∈ 0..side` of `index` along `axis` (`i_j = c − M`).
    #[inline]
    pub fn coord(&self, index: usize, axis: usize) -> usize {
        (index / self.stride(axis)) % self.side()
    }

    /// Multi-index of the site stored at `index`.
    pub fn site(&self, index: usize) -> Vec<i64> {
        let m = self.radius as i64;
        (0..self.dim)
            .map(|axis| self.coord(index, axis) as i64 - m)
            .collect()
    }

    /// Storage index of a multi-index, or `None` outside the box.
    pub fn index(&self, site: &[i64]) -> Option<usize> {
        if site.len() != self.dim {
            return None;
        }
        let m = self.radius as i64;
        site.iter().try_fold(0usize, |acc, &i| {
            (i.abs() <= m).then(|| acc * self.side() + (i + m) as usize)
        })
    }

    pub fn sites(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.site_count()).map(|k| self.site(k))
    }

    /// Euclidean norm `|i|` of the multi-index stored at `index`.
    pub fn site_norm(&self, index: usize) -> f64 {
        let m = self.radius as f64;
        (0..self.dim)
            .map(|axis| {
                let i = self.coord(index, axis) as f64 - m;
                i * i
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// A real value per lattice site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    shape: LatticeShape,
    values: Vec<f64>,
}

impl StateVector {
    pub fn zeros(shape: LatticeShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.site_count()],
        }
    }

    /// Rejects wrong lengths and non-finite entries.
    pub fn from_values(shape: LatticeShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.site_count() {
            return Err(Error::ShapeMismatch {
                expected: shape.site_count(),
                actual: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(vec![format!(
                "state entry at site {:?} is not finite",
                shape.site(k)
            )]));
        }
        Ok(Self { shape, values })
    }

    /// Internal constructor for values already known to be well formed.
    pub(crate) fn from_raw(shape: LatticeShape, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), shape.site_count());
        Self { shape, values }
    }

    pub fn from_fn(shape: LatticeShape, mut f: impl FnMut(&[i64]) -> f64) -> Self {
        let values = (0..shape.site_count()).map(|k| f(&shape.site(k))).collect();
        Self { shape, values }
    }

    /// Unit vector `e_i`; `None` if `site` lies outside the box.
    pub fn basis(shape: LatticeShape, site: &[i64]) -> Option<Self> {
        let k = shape.index(site)?;
        let mut v = Self::zeros(shape);
        v.values[k] = 1.0;
        Some(v)
    }

    pub fn shape(&self) -> LatticeShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, site: &[i64]) -> f64 {
        self.shape.index(site).map_or(0.0, |k| self.values[k])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn ensure_same_shape(&self, other: &StateVector) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.site_count(),
                actual: other.shape.site_count(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &StateVector) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.values, &self.values)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance(&self, other: &StateVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, c: f64) -> StateVector {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> StateVector {
        Self::from_raw(self.shape, self.values.iter().map(|&v| f(v)).collect())
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, c: f64, other: &StateVector) -> StateVector {
        Self::from_raw(
            self.shape,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &StateVector) -> StateVector {
        self.add_scaled(-1.0, other)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out = A u` for the zero-padded negative discrete Laplacian.
pub(crate) fn laplacian_into(shape: &LatticeShape, u: &[f64], out: &mut [f64]) {
    let side = shape.side();
    let two_n = 2.0 * shape.dim() as f64;
    for (o, &v) in out.iter_mut().zip(u) {
        *o = two_n * v;
    }
    for axis in 0..shape.dim() {
        let stride = shape.stride(axis);
        for (k, o) in out.iter_mut().enumerate() {
            let c = (k / stride) % side;
            if c > 0 {
                *o -= u[k - stride];
            }
            if c + 1 < side {
                *o -= u[k + stride];
            }
        }
    }
}

/// Negative discrete Laplacian `A = Σ_j A_j` with
/// `(A_j u)_i = −u_{i+e_j} + 2u_i − u_{i−e_j}`.
pub fn apply_laplacian(u: &StateVector) -> StateVector {
    let mut out = vec![0.0; u.values.len()];
    laplacian_into(&u.shape, &u.values, &mut out);
    StateVector::from_raw(u.shape, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `(B_j u)_i = u_{i+e_j} − u_i`
    Forward,
    /// `(B_j* u)_i = u_{i−e_j} − u_i`
    Backward,
}

/// `B_j u` or `B_j* u` restricted to the box. Axes are zero based.
pub fn apply_diff(u: &StateVector, axis: usize, direction: Direction) -> Result<StateVector> {
    let shape = u.shape;
    if axis >= shape.dim() {
        return Err(Error::AxisOutOfRange {
            axis,
            dim: shape.dim(),
        });
    }
    let side = shape.side();
    let stride = shape.stride(axis);
    let values = (0..u.values.len())
        .map(|k| {
            let c = (k / stride) % side;
            let neighbour = match direction {
                Direction::Forward if c + 1 < side => u.values[k + stride],
                Direction::Backward if c > 0 => u.values[k - stride],
                _ => 0.0,
            };
            neighbour - u.values[k]
        })
        .collect();
    Ok(StateVector::from_raw(shape, values))
}

/// `‖B_j ũ‖²` in `ℓ²(ℤ^N)`, where `ũ` is the zero extension of `u`.
///
/// `B_j ũ` is supported on the box plus the ghost layer `i_j = −M − 1`,
/// where it equals the lower-face values of `u`. Including that layer makes
/// `(Au, u) = Σ_j ‖B_j ũ‖²` exact for the zero-padded Laplacian.
pub fn diff_energy(u: &StateVector, axis: usize) -> Result<f64> {
    let inside = apply_diff(u, axis, Direction::Forward)?.norm_sq();
    let shape = u.shape;
    let ghost: f64 = (0..u.values.len())
        .filter(|&k| shape.coord(k, axis) == 0)
        .map(|k| u.values[k] * u.values[k])
        .sum();
    Ok(inside + ghost)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    Standard,
    /// `κ(s) = (1 + s²)^{1/2}`
    Kappa,
    /// `κ_δ(s) = (1 + δ² s²)^{1/2}`
    KappaDelta(f64),
}

impl Weight {
    /// Squared weight at a site of Euclidean index norm `r`.
    #[inline]
    pub fn squared_at(&self, r: f64) -> f64 {
        match *self {
            Weight::Standard => 1.0,
            Weight::Kappa => 1.0 + r * r,
            Weight::KappaDelta(delta) => 1.0 + delta * delta * r * r,
        }
    }
}

/// Per-site squared weights, in enumeration order.
pub fn weight_profile(shape: &LatticeShape, weight: Weight) -> Vec<f64> {
    (0..shape.site_count())
        .map(|k| weight.squared_at(shape.site_norm(k)))
        .collect()
}

pub fn weighted_norm(u: &StateVector, weight: Weight) -> f64 {
    weighted_norm_sq(u, weight).sqrt()
}

pub fn weighted_norm_sq(u: &StateVector, weight: Weight) -> f64 {
    if let Weight::Standard = weight {
        return u.norm_sq();
    }
    u.values
        .iter()
        .enumerate()
        .map(|(k, v)| weight.squared_at(u.shape.site_norm(k)) * v * v)
        .sum()
}

/// `Σ_{|i| ≥ k} |u_i|²` with `|i|` the Euclidean multi-index norm.
pub fn tail_mass(u: &StateVector, k: usize) -> f64 {
    let k = k as f64;
    u.values
        .iter()
        .enumerate()
        .filter(|&(idx, _)| u.shape.site_norm(idx) >= k)
        .map(|(_, v)| v * v)
        .sum()
}

/// Writes one row per site: the index tuple followed by the value.
pub fn write_csv<W: Write>(u: &StateVector, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=u.shape.dim()).map(|j| format!("i{j}")).collect();
    header.push("value".into());
    w.write_record(&header)?;
    for (k, v) in u.values.iter().enumerate() {
        let mut row: Vec<String> = u.shape.site(k).iter().map(|i| i.to_string()).collect();
        row.push(v.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the CSV layout of [`write_csv`]; rows may come in any order and
/// missing sites are zero.
pub fn read_csv<R: Read>(shape: LatticeShape, reader: R) -> Result<StateVector> {
    let mut r = csv::Reader::from_reader(reader);
    let mut values = vec![0.0; shape.site_count()];
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let parse_err = |message: String| Error::Parse {
            line: line + 2,
            message,
        };
        if record.len() != shape.dim() + 1 {
            return Err(parse_err(format!(
                "expected {} columns, found {}",
                shape.dim() + 1,
                record.len()
            )));
        }
        let site = record
            .iter()
            .take(shape.dim())
            .map(|s| s.trim().parse::<i64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_err(e.to_string()))?;
        let value: f64 = record[shape.dim()]
            .trim()
            .parse()
            .map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?;
        let k = shape
            .index(&site)
            .ok_or_else(|| parse_err(format!("site {site:?} outside the lattice")))?;
        values[k] = value;
    }
    StateVector::from_values(shape, values)
}

/// Flat little-endian `f64` values in enumeration order.
pub fn write_binary<W: Write>(u: &StateVector, mut writer: W) -> Result<()> {
    for v in &u.values {
        writer.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(shape: LatticeShape, mut reader: R) -> Result<StateVector> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * shape.site_count() {
        return Err(Error::ShapeMismatch {
            expected: shape.site_count(),
            actual: bytes.len() / 8,
        });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8 bytes")))
        .collect();
    StateVector::from_values(shape, values)
}
