use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{softplus, ModelError, ModelKind};

/// Free parameters of one model, stored in a single flat buffer so the
/// optimizer can update every coordinate at once.
///
/// Block order: `t` (I), `q` (I×M), `b` (J), `c` (M), `r_raw`, `w_raw`,
/// then `mu` (I×J) for the impression models. Matrices are row-major.
/// `r_raw` is I×M for per-criterion variance kinds and I otherwise;
/// `w_raw` is J×M or J likewise.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    kind: ModelKind,
    n_targets: usize,
    n_workers: usize,
    n_criteria: usize,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub t: usize,
    pub q: usize,
    pub b: usize,
    pub c: usize,
    pub r: usize,
    pub w: usize,
    pub mu: usize,
    pub end: usize,
}

impl ParameterSet {
    /// All-zero parameter set of the right shape.
    pub fn zeros(kind: ModelKind, n_targets: usize, n_workers: usize, n_criteria: usize) -> Self {
        let mut p = Self {
            kind,
            n_targets,
            n_workers,
            n_criteria,
            values: Vec::new(),
        };
        p.values = vec![0.0; p.layout().end];
        p
    }

    pub(crate) fn layout(&self) -> Layout {
        let (i, j, m) = (self.n_targets, self.n_workers, self.n_criteria);
        let per_m = self.kind.per_criterion_variance();
        let t = 0;
        let q = t + i;
        let b = q + i * m;
        let c = b + j;
        let r = c + m;
        let w = r + if per_m { i * m } else { i };
        let mu = w + if per_m { j * m } else { j };
        let end = mu + if self.kind.has_impression() { i * j } else { 0 };
        Layout {
            t,
            q,
            b,
            c,
            r,
            w,
            mu,
            end,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    pub fn n_criteria(&self) -> usize {
        self.n_criteria
    }

    pub fn same_shape(&self, other: &ParameterSet) -> bool {
        self.kind == other.kind
            && self.n_targets == other.n_targets
            && self.n_workers == other.n_workers
            && self.n_criteria == other.n_criteria
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn fill(&mut self, value: f64) {
        self.values.fill(value);
    }

    // --- index helpers into the flat buffer ---

    #[inline]
    pub fn t_index(&self, i: usize) -> usize {
        self.layout().t + i
    }

    #[inline]
    pub fn q_index(&self, i: usize, m: usize) -> usize {
        self.layout().q + i * self.n_criteria + m
    }

    #[inline]
    pub fn b_index(&self, j: usize) -> usize {
        self.layout().b + j
    }

    #[inline]
    pub fn c_index(&self, m: usize) -> usize {
        self.layout().c + m
    }

    #[inline]
    pub fn r_index(&self, i: usize, m: usize) -> usize {
        if self.kind.per_criterion_variance() {
            self.layout().r + i * self.n_criteria + m
        } else {
            self.layout().r + i
        }
    }

    #[inline]
    pub fn w_index(&self, j: usize, m: usize) -> usize {
        if self.kind.per_criterion_variance() {
            self.layout().w + j * self.n_criteria + m
        } else {
            self.layout().w + j
        }
    }

    /// Panics for kinds without impression parameters.
    #[inline]
    pub fn mu_index(&self, i: usize, j: usize) -> usize {
        assert!(self.kind.has_impression(), "{} has no impression parameters", self.kind);
        self.layout().mu + i * self.n_workers + j
    }

    // --- block views ---

    fn block(&self, range: Range<usize>) -> &[f64] {
        &self.values[range]
    }

    fn block_mut(&mut self, range: Range<usize>) -> &mut [f64] {
        &mut self.values[range]
    }

    pub fn t(&self) -> &[f64] {
        let l = self.layout();
        self.block(l.t..l.q)
    }

    pub fn t_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        self.block_mut(l.t..l.q)
    }

    /// Row-major I×M.
    pub fn q(&self) -> &[f64] {
        let l = self.layout();
        self.block(l.q..l.b)
    }

    pub fn q_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        self.block_mut(l.q..l.b)
    }

    pub fn b(&self) -> &[f64] {
        let l = self.layout();
        self.block(l.b..l.c)
    }

    pub fn b_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        self.block_mut(l.b..l.c)
    }

    pub fn c(&self) -> &[f64] {
        let l = self.layout();
        self.block(l.c..l.r)
    }

    pub fn c_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        self.block_mut(l.c..l.r)
    }

    pub fn r_raw(&self) -> &[f64] {
        let l = self.layout();
        self.block(l.r..l.w)
    }

    pub fn r_raw_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        self.block_mut(l.r..l.w)
    }

    pub fn w_raw(&self) -> &[f64] {
        let l = self.layout();
        self.block(l.w..l.mu)
    }

    pub fn w_raw_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        self.block_mut(l.w..l.mu)
    }

    /// Row-major I×J impressions, `None` for CIM and CDM.
    pub fn mu(&self) -> Option<&[f64]> {
        let l = self.layout();
        self.kind.has_impression().then(|| self.block(l.mu..l.end))
    }

    pub fn mu_mut(&mut self) -> Option<&mut [f64]> {
        let l = self.layout();
        if self.kind.has_impression() {
            Some(self.block_mut(l.mu..l.end))
        } else {
            None
        }
    }

    /// Criterion quality `t_i + q_i^(m)` as an I×M row-major vector.
    pub fn criterion_quality(&self) -> Vec<f64> {
        let m = self.n_criteria;
        self.q()
            .iter()
            .enumerate()
            .map(|(k, q)| self.t()[k / m] + q)
            .collect()
    }

    /// Effective target-side variances `softplus(r_raw)`.
    pub fn r(&self) -> Vec<f64> {
        self.r_raw().iter().map(|&x| softplus(x)).collect()
    }

    /// Effective worker-side variances `softplus(w_raw)`.
    pub fn w(&self) -> Vec<f64> {
        self.w_raw().iter().map(|&x| softplus(x)).collect()
    }
}

// JSON form: one key per parameter, matrices as nested arrays.

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Block {
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
struct ParameterDoc {
    kind: ModelKind,
    t: Vec<f64>,
    q: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    r_raw: Block,
    w_raw: Block,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<Vec<Vec<f64>>>,
}

fn rows(flat: &[f64], width: usize) -> Vec<Vec<f64>> {
    if width == 0 {
        return Vec::new();
    }
    flat.chunks(width).map(<[f64]>::to_vec).collect()
}

fn flatten(name: &str, rows: &[Vec<f64>], width: usize) -> Result<Vec<f64>, ModelError> {
    if rows.iter().any(|r| r.len() != width) {
        return Err(ModelError::ShapeMismatch(format!(
            "{name}: every row must have {width} entries"
        )));
    }
    Ok(rows.concat())
}

impl From<&ParameterSet> for ParameterDoc {
    fn from(p: &ParameterSet) -> Self {
        let m = p.n_criteria;
        let var_block = |flat: &[f64]| {
            if p.kind.per_criterion_variance() {
                Block::Matrix(rows(flat, m))
            } else {
                Block::Vector(flat.to_vec())
            }
        };
        ParameterDoc {
            kind: p.kind,
            t: p.t().to_vec(),
            q: rows(p.q(), m),
            b: p.b().to_vec(),
            c: p.c().to_vec(),
            r_raw: var_block(p.r_raw()),
            w_raw: var_block(p.w_raw()),
            mu: p.mu().map(|mu| rows(mu, p.n_workers)),
        }
    }
}

impl TryFrom<ParameterDoc> for ParameterSet {
    type Error = ModelError;

    fn try_from(doc: ParameterDoc) -> Result<Self, Self::Error> {
        let (i, j, m) = (doc.t.len(), doc.b.len(), doc.c.len());
        let mut p = ParameterSet::zeros(doc.kind, i, j, m);
        if doc.q.len() != i {
            return Err(ModelError::ShapeMismatch(format!("q has {} rows, expected {i}", doc.q.len())));
        }
        let q = flatten("q", &doc.q, m)?;
        let per_m = doc.kind.per_criterion_variance();
        let var = |name: &str, block: Block, n: usize| -> Result<Vec<f64>, ModelError> {
            match (block, per_m) {
                (Block::Matrix(rs), true) if rs.len() == n => flatten(name, &rs, m),
                (Block::Vector(v), false) if v.len() == n => Ok(v),
                _ => Err(ModelError::ShapeMismatch(format!("{name} has the wrong shape for {}", doc.kind))),
            }
        };
        let r = var("r_raw", doc.r_raw, i)?;
        let w = var("w_raw", doc.w_raw, j)?;
        p.t_mut().copy_from_slice(&doc.t);
        p.q_mut().copy_from_slice(&q);
        p.b_mut().copy_from_slice(&doc.b);
        p.c_mut().copy_from_slice(&doc.c);
        p.r_raw_mut().copy_from_slice(&r);
        p.w_raw_mut().copy_from_slice(&w);
        match (doc.mu, p.mu_mut()) {
            (Some(rs), Some(dst)) if rs.len() == i => dst.copy_from_slice(&flatten("mu", &rs, j)?),
            (None, None) => {}
            _ => return Err(ModelError::ShapeMismatch(format!("mu has the wrong shape for {}", doc.kind))),
        }
        Ok(p)
    }
}

impl Serialize for ParameterSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ParameterDoc::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ParameterSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = ParameterDoc::deserialize(deserializer)?;
        ParameterSet::try_from(doc).map_err(serde::de::Error::custom)
    }
}
