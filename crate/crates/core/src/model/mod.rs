//! Permutation-invariant set architectures.
//!
//! An element encoder `φ` (the init layer) maps every feature row to an
//! `h`-dimensional embedding. The set function sums embeddings over the
//! subset `S` and over the whole ground set `V`, passes each pool through
//! its own linear head, adds the two, applies ReLU and reads out a scalar:
//!
//! ```text
//! F(S; V) = out( ReLU( θ₁(Σ_{i∈S} φ(x_i)) + θ₂(Σ_{j∈V} φ(x_j)) ) )
//! ```
//!
//! The DeepSets variant drops the `θ₂` branch and therefore cannot see
//! elements outside `S`. The equivariant network (EquiNet) reuses `φ` and
//! scores each element against the pooled ground set to produce selection
//! probabilities.
//!
//! The public value-level operations canonicalize the input first (rows in
//! lexicographic order), so they are exactly invariant, or equivariant,
//! under any reordering of the elements.

mod canonical;
mod incremental;

pub use canonical::Canonical;
pub use incremental::{EnergyContext, IncrementalEnergy, IncrementalError};

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::sample::SubsetMask;
use crate::tensor::{ShapeError, Tensor};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// Subset pool plus superset pool.
    Inset,
    /// Subset pool only; the superset and EquiNet context branches are off.
    #[serde(rename = "deepsets-only")]
    #[value(name = "deepsets-only")]
    DeepSetsOnly,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Inset => "inset",
            ModelVariant::DeepSetsOnly => "deepsets-only",
        }
    }

    pub fn uses_superset(self) -> bool {
        matches!(self, ModelVariant::Inset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    /// Element feature width.
    pub d: usize,
    /// Embedding width.
    pub h: usize,
    /// Hidden width of the set-function and EquiNet heads.
    pub h_d: usize,
}

impl Dims {
    /// Wide configuration for embedding-scale inputs.
    pub const fn large(d: usize) -> Self {
        Dims { d, h: 256, h_d: 500 }
    }

    /// Smaller widths used for the synthetic benchmarks here.
    pub const fn desk(d: usize) -> Self {
        Dims { d, h: 64, h_d: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("feature width {got} does not match model width {expected}")]
    FeatureWidth { expected: usize, got: usize },
    #[error("mask length {got} does not match ground set size {expected}")]
    MaskLength { expected: usize, got: usize },
    #[error("parameter {name} has shape {got:?}, expected {expected:?}")]
    ParamShape {
        name: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
}

/// A fully connected layer `x ↦ x·W + b` with `W: in × out`, `b: 1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Tensor::zeros(inputs, outputs),
            bias: Tensor::zeros(1, outputs),
        }
    }

    /// Weights and bias uniform in `±1/√inputs`.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        Linear {
            weight: Tensor::uniform(inputs, outputs, bound, rng),
            bias: Tensor::uniform(1, outputs, bound, rng),
        }
    }
}

pub const PARAM_NAMES: [&str; 14] = [
    "phi.weight",
    "phi.bias",
    "theta1.weight",
    "theta1.bias",
    "theta2.weight",
    "theta2.bias",
    "out_head.weight",
    "out_head.bias",
    "equinet_elem.weight",
    "equinet_elem.bias",
    "equinet_ctx.weight",
    "equinet_ctx.bias",
    "equinet_out.weight",
    "equinet_out.bias",
];

/// Every learnable weight of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct InsetParams {
    /// Element encoder, `d → h`.
    pub phi: Linear,
    /// Subset-pool head, `h → h_d`.
    pub theta1: Linear,
    /// Superset-pool head, `h → h_d`.
    pub theta2: Linear,
    /// Scalar readout, `h_d → 1`.
    pub out_head: Linear,
    pub equinet_elem: Linear,
    pub equinet_ctx: Linear,
    pub equinet_out: Linear,
}

impl InsetParams {
    fn layers(&self) -> [&Linear; 7] {
        [
            &self.phi,
            &self.theta1,
            &self.theta2,
            &self.out_head,
            &self.equinet_elem,
            &self.equinet_ctx,
            &self.equinet_out,
        ]
    }

    fn layers_mut(&mut self) -> [&mut Linear; 7] {
        [
            &mut self.phi,
            &mut self.theta1,
            &mut self.theta2,
            &mut self.out_head,
            &mut self.equinet_elem,
            &mut self.equinet_ctx,
            &mut self.equinet_out,
        ]
    }

    /// Parameters in [`PARAM_NAMES`] order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers()
            .into_iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn to_vec(&self) -> Vec<Tensor> {
        self.tensors().into_iter().cloned().collect()
    }

    /// Overwrites every parameter from `values`, checking shapes.
    pub fn assign(&mut self, values: &[Tensor]) -> Result<(), ModelError> {
        if values.len() != PARAM_NAMES.len() {
            return Err(ShapeError::Mismatch {
                op: "assign_params",
                lhs: (PARAM_NAMES.len(), 1),
                rhs: (values.len(), 1),
            }
            .into());
        }
        for ((slot, v), name) in self.tensors_mut().into_iter().zip(values).zip(PARAM_NAMES) {
            if slot.shape() != v.shape() {
                return Err(ModelError::ParamShape {
                    name,
                    expected: slot.shape(),
                    got: v.shape(),
                });
            }
            *slot = v.clone();
        }
        Ok(())
    }

    pub fn shapes(dims: Dims) -> [(usize, usize); 14] {
        let Dims { d, h, h_d } = dims;
        [
            (d, h),
            (1, h),
            (h, h_d),
            (1, h_d),
            (h, h_d),
            (1, h_d),
            (h_d, 1),
            (1, 1),
            (h, h_d),
            (1, h_d),
            (h, h_d),
            (1, h_d),
            (h_d, 1),
            (1, 1),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameters flattened in [`PARAM_NAMES`] order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length");
    }
}

/// Tape leaves for every parameter, in [`PARAM_NAMES`] order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn layer(&self, idx: usize) -> (Var, Var) {
        (self.vars[2 * idx], self.vars[2 * idx + 1])
    }

    pub(crate) fn out_weight(&self) -> Var {
        self.vars[6]
    }
}

const PHI: usize = 0;
const THETA1: usize = 1;
const THETA2: usize = 2;
const OUT: usize = 3;
const EQ_ELEM: usize = 4;
const EQ_CTX: usize = 5;
const EQ_OUT: usize = 6;

/// Intermediate results shared by the energy and EquiNet graphs.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// `n × h` element embeddings.
    pub embeddings: Var,
    /// `1 × h` pooled ground set.
    pub pool: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InsetModel {
    pub variant: ModelVariant,
    pub dims: Dims,
    pub params: InsetParams,
}

impl InsetModel {
    pub fn new<R: Rng + ?Sized>(variant: ModelVariant, dims: Dims, rng: &mut R) -> Self {
        let Dims { d, h, h_d } = dims;
        let params = InsetParams {
            phi: Linear::init(d, h, rng),
            theta1: Linear::init(h, h_d, rng),
            theta2: Linear::init(h, h_d, rng),
            out_head: Linear::init(h_d, 1, rng),
            equinet_elem: Linear::init(h, h_d, rng),
            equinet_ctx: Linear::init(h, h_d, rng),
            equinet_out: Linear::init(h_d, 1, rng),
        };
        InsetModel {
            variant,
            dims,
            params,
        }
    }

    pub fn zeros(variant: ModelVariant, dims: Dims) -> Self {
        let Dims { d, h, h_d } = dims;
        InsetModel {
            variant,
            dims,
            params: InsetParams {
                phi: Linear::zeros(d, h),
                theta1: Linear::zeros(h, h_d),
                theta2: Linear::zeros(h, h_d),
                out_head: Linear::zeros(h_d, 1),
                equinet_elem: Linear::zeros(h, h_d),
                equinet_ctx: Linear::zeros(h, h_d),
                equinet_out: Linear::zeros(h_d, 1),
            },
        }
    }

    pub fn check_features(&self, features: &Tensor) -> Result<(), ModelError> {
        if features.cols() != self.dims.d {
            return Err(ModelError::FeatureWidth {
                expected: self.dims.d,
                got: features.cols(),
            });
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams {
            vars: self
                .params
                .tensors()
                .into_iter()
                .map(|t| tape.leaf(t.clone()))
                .collect(),
        }
    }

    fn linear(
        &self,
        tape: &mut Tape,
        b: &BoundParams,
        layer: usize,
        x: Var,
    ) -> Result<Var, ShapeError> {
        let (w, bias) = b.layer(layer);
        let xw = tape.matmul(x, w)?;
        tape.add_row_bias(xw, bias)
    }

    /// Embeds the rows of `x` and pools them.
    pub fn encode(&self, tape: &mut Tape, b: &BoundParams, x: Var) -> Result<Encoded, ShapeError> {
        let embeddings = self.linear(tape, b, PHI, x)?;
        let pool = tape.sum_rows(embeddings);
        Ok(Encoded { embeddings, pool })
    }

    /// `θ₂(pool_V)` for the INSET variant, `None` for DeepSets.
    pub fn superset_term(
        &self,
        tape: &mut Tape,
        b: &BoundParams,
        enc: Encoded,
    ) -> Result<Option<Var>, ShapeError> {
        if !self.variant.uses_superset() {
            return Ok(None);
        }
        self.linear(tape, b, THETA2, enc.pool).map(Some)
    }

    /// Scalar `F(S; V)` where `members` lists the elements of `S` by row.
    pub fn energy_var(
        &self,
        tape: &mut Tape,
        b: &BoundParams,
        enc: Encoded,
        members: Vec<usize>,
    ) -> Result<Var, ShapeError> {
        let picked = tape.gather_rows(enc.embeddings, members)?;
        let pool_s = tape.sum_rows(picked);
        let mut pre = self.linear(tape, b, THETA1, pool_s)?;
        if let Some(ctx) = self.superset_term(tape, b, enc)? {
            pre = tape.add(pre, ctx)?;
        }
        let hidden = tape.relu(pre);
        self.readout_var(tape, b, hidden)
    }

    /// The scalar head applied to each row of `hidden` (`r × h_d → r × 1`).
    pub fn readout_var(
        &self,
        tape: &mut Tape,
        b: &BoundParams,
        hidden: Var,
    ) -> Result<Var, ShapeError> {
        self.linear(tape, b, OUT, hidden)
    }

    /// Per-element contributions `φ(x_i)·W₁` (`n × h_d`) and the constant
    /// part `b₁ + θ₂(pool_V)` (`1 × h_d`) of the set-function
    /// pre-activation. The pre-activation of `S` is `Σ_{i∈S} u_i + c`.
    pub fn preactivation_parts(
        &self,
        tape: &mut Tape,
        b: &BoundParams,
        enc: Encoded,
    ) -> Result<(Var, Var), ShapeError> {
        let (w1, b1) = b.layer(THETA1);
        let u = tape.matmul(enc.embeddings, w1)?;
        let c = match self.superset_term(tape, b, enc)? {
            Some(ctx) => tape.add(ctx, b1)?,
            None => b1,
        };
        Ok((u, c))
    }

    /// EquiNet logits, `n × 1`.
    pub fn equinet_logits_var(
        &self,
        tape: &mut Tape,
        b: &BoundParams,
        enc: Encoded,
    ) -> Result<Var, ShapeError> {
        let mut pre = self.linear(tape, b, EQ_ELEM, enc.embeddings)?;
        if self.variant.uses_superset() {
            let ctx = self.linear(tape, b, EQ_CTX, enc.pool)?;
            pre = tape.add_row_bias(pre, ctx)?;
        }
        let hidden = tape.relu(pre);
        self.linear(tape, b, EQ_OUT, hidden)
    }

    /// Element embeddings `φ(x_i)`, one row per element.
    pub fn init_layer(&self, features: &Tensor) -> Result<Tensor, ModelError> {
        self.check_features(features)?;
        let mut out = features.matmul(&self.params.phi.weight)?;
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(self.params.phi.bias.data()) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// `F(S; V)` for the subset marked by `mask`.
    ///
    /// The empty subset is valid and pools to the zero vector.
    pub fn energy(&self, features: &Tensor, mask: &SubsetMask) -> Result<f64, ModelError> {
        self.check_features(features)?;
        if mask.len() != features.rows() {
            return Err(ModelError::MaskLength {
                expected: features.rows(),
                got: mask.len(),
            });
        }
        let canon = Canonical::with_tiebreak(features, mask.bits());
        let x = canon.features(features);
        let members = canon.to_canonical(mask.bits());
        let members: Vec<usize> = (0..members.len()).filter(|&j| members[j]).collect();
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let xv = tape.leaf(x);
        let enc = self.encode(&mut tape, &b, xv)?;
        let f = self.energy_var(&mut tape, &b, enc, members)?;
        Ok(tape.value(f).item()?)
    }

    /// EquiNet selection probabilities in `(0, 1)`, one per element.
    pub fn equinet_probs(&self, features: &Tensor) -> Result<Vec<f64>, ModelError> {
        self.check_features(features)?;
        let canon = Canonical::new(features);
        let probs = self.equinet_probs_canonical(&canon.features(features))?;
        Ok(canon.to_storage(&probs))
    }

    /// EquiNet probabilities for rows already in canonical order.
    pub(crate) fn equinet_probs_canonical(&self, x: &Tensor) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let enc = self.encode(&mut tape, &b, xv)?;
        let logits = self.equinet_logits_var(&mut tape, &b, enc)?;
        let y = tape.sigmoid(logits);
        Ok(tape.value(y).data().to_vec())
    }

    /// Precomputed state for fast energy and marginal-gain evaluation over
    /// the rows of `features`, in the given order.
    pub fn energy_context(&self, features: &Tensor) -> Result<EnergyContext, ModelError> {
        self.check_features(features)?;
        EnergyContext::new(self, features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn small() -> Dims {
        Dims { d: 2, h: 6, h_d: 5 }
    }

    #[test]
    fn zero_weights_give_zero_embeddings_and_bias_energy() {
        let mut m = InsetModel::zeros(ModelVariant::Inset, small());
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        assert_eq!(m.init_layer(&x).unwrap(), Tensor::zeros(2, 6));
        m.params.out_head.bias = Tensor::scalar(0.75);
        for code in 0..4 {
            let mask = SubsetMask::from_code(2, code);
            assert_eq!(m.energy(&x, &mask).unwrap(), 0.75);
        }
    }

    #[test]
    fn init_layer_is_row_wise() {
        let mut rng = rng_from(11);
        let m = InsetModel::new(ModelVariant::Inset, small(), &mut rng);
        let x = Tensor::uniform(5, 2, 1.0, &mut rng);
        let full = m.init_layer(&x).unwrap();
        for r in 0..5 {
            let single = Tensor::from_vec(1, 2, x.row(r).to_vec()).unwrap();
            let row = m.init_layer(&single).unwrap();
            for c in 0..6 {
                assert!((row.get(0, c) - full.get(r, c)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn equinet_zero_weights_give_sigmoid_of_bias() {
        let mut m = InsetModel::zeros(ModelVariant::Inset, small());
        m.params.equinet_out.bias = Tensor::scalar(0.3);
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.0, 0.0]]).unwrap();
        let y = m.equinet_probs(&x).unwrap();
        let expected = 1.0 / (1.0 + (-0.3f64).exp());
        for v in y {
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicate_rows_get_identical_probabilities() {
        let mut rng = rng_from(5);
        let m = InsetModel::new(ModelVariant::Inset, small(), &mut rng);
        let x = Tensor::from_rows(&[vec![0.4, -1.0], vec![2.0, 0.1], vec![0.4, -1.0]]).unwrap();
        let y = m.equinet_probs(&x).unwrap();
        assert_eq!(y[0], y[2]);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let m = InsetModel::zeros(ModelVariant::Inset, small());
        let x = Tensor::zeros(3, 4);
        assert!(matches!(
            m.init_layer(&x),
            Err(ModelError::FeatureWidth { expected: 2, got: 4 })
        ));
        let x = Tensor::zeros(3, 2);
        assert!(matches!(
            m.energy(&x, &SubsetMask::empty(2)),
            Err(ModelError::MaskLength { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn params_flatten_round_trip() {
        let mut rng = rng_from(1);
        let m = InsetModel::new(ModelVariant::Inset, small(), &mut rng);
        let flat = m.params.flatten();
        assert_eq!(flat.len(), m.params.param_count());
        let mut z = InsetModel::zeros(ModelVariant::Inset, small());
        z.params.unflatten(&flat);
        assert_eq!(z, m);
        for (t, shape) in m.params.tensors().iter().zip(InsetParams::shapes(small())) {
            assert_eq!(t.shape(), shape);
        }
    }
}
