//! The GIN expert: fusion, message passing, mean readout and MLP head.

use super::layers::{aggregate, dropout_mask, mean_readout, mean_readout_backward, relu, relu_backward, Linear};
use super::loss::{ce_with_grad, zlpr_with_grad};
use super::GnnError;
use crate::encode::GraphInput;
use crate::taxonomy::TaskKind;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GinConfig {
    pub task: TaskKind,
    /// Embedding dimension `d`; node inputs have `2d` columns.
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
}

impl GinConfig {
    pub fn new(task: TaskKind, embed_dim: usize) -> Self {
        Self { task, embed_dim, hidden: 1024, layers: 2, dropout: 0.5 }
    }

    pub fn labels(&self) -> usize {
        self.task.taxonomy().len()
    }

    pub fn validate(&self) -> Result<(), GnnError> {
        if self.embed_dim == 0 || self.hidden == 0 {
            return Err(GnnError::Config("dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(GnnError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GinModel {
    pub config: GinConfig,
    pub fusion: Linear,
    /// Two-layer perceptron per GIN layer.
    pub gin: Vec<[Linear; 2]>,
    pub head: [Linear; 2],
}

/// Several graphs stacked into one node matrix.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Array2<f64>,
    pub edges: Vec<(usize, usize)>,
    pub offsets: Vec<usize>,
}

impl Batch {
    pub fn new(graphs: &[&GraphInput]) -> Result<Self, GnnError> {
        let cols = graphs.first().map(|g| g.x.ncols()).unwrap_or(0);
        let mut offsets = vec![0];
        let mut edges = Vec::new();
        for g in graphs {
            if g.x.ncols() != cols {
                return Err(GnnError::Config("graphs disagree on feature width".into()));
            }
            if g.is_empty() {
                return Err(GnnError::Precondition(format!("graph {} has no nodes", g.id)));
            }
            let base = *offsets.last().expect("non-empty");
            for &(u, v) in &g.edges {
                if u >= g.len() || v >= g.len() {
                    return Err(GnnError::Precondition(format!("graph {} has an edge out of range", g.id)));
                }
                edges.push((base + u, base + v));
            }
            offsets.push(base + g.len());
        }
        let views: Vec<_> = graphs.iter().map(|g| g.x.view()).collect();
        let x = if views.is_empty() {
            Array2::zeros((0, cols))
        } else {
            ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| GnnError::Config(e.to_string()))?
        };
        Ok(Self { x, edges, offsets })
    }

    pub fn graphs(&self) -> usize {
        self.offsets.len() - 1
    }
}

struct LayerCache {
    input: Array2<f64>,
    agg: Array2<f64>,
    z1: Array2<f64>,
    r1: Array2<f64>,
    z2: Array2<f64>,
    mask: Option<Array2<f64>>,
}

/// Intermediate values kept for the backward pass.
pub struct Forward {
    h0: Array2<f64>,
    layers: Vec<LayerCache>,
    pooled: Array2<f64>,
    q: Array2<f64>,
    r: Array2<f64>,
    head_mask: Option<Array2<f64>>,
    /// Head outputs, one row per graph.
    pub out: Array2<f64>,
}

impl GinModel {
    /// Fresh model; every linear layer is uniform in `±1/sqrt(fan_in)`.
    pub fn new(config: GinConfig, seed: u64) -> Result<Self, GnnError> {
        config.validate()?;
        let mut rng = crate::seed::rng(crate::seed::derive_str(seed, "gin-init"));
        let h = config.hidden;
        let fusion = Linear::uniform(2 * config.embed_dim, h, &mut rng);
        let gin = (0..config.layers)
            .map(|_| [Linear::uniform(h, h, &mut rng), Linear::uniform(h, h, &mut rng)])
            .collect();
        let head = [Linear::uniform(h, h, &mut rng), Linear::uniform(h, config.labels(), &mut rng)];
        Ok(Self { config, fusion, gin, head })
    }

    /// Parameter groups in canonical order.
    pub fn linears(&self) -> Vec<(String, &Linear)> {
        let mut out = vec![("fusion".to_owned(), &self.fusion)];
        for (l, mlp) in self.gin.iter().enumerate() {
            out.push((format!("gin.{l}.mlp.0"), &mlp[0]));
            out.push((format!("gin.{l}.mlp.1"), &mlp[1]));
        }
        out.push(("head.0".into(), &self.head[0]));
        out.push(("head.1".into(), &self.head[1]));
        out
    }

    pub fn linears_mut(&mut self) -> Vec<&mut Linear> {
        let mut out = vec![&mut self.fusion];
        for mlp in &mut self.gin {
            let [a, b] = mlp;
            out.push(a);
            out.push(b);
        }
        let [a, b] = &mut self.head;
        out.push(a);
        out.push(b);
        out
    }

    pub fn zero_grads(&self) -> Vec<Linear> {
        self.linears().into_iter().map(|(_, l)| l.zeros_like()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.linears().iter().map(|(_, l)| l.parameter_count()).sum()
    }

    /// Per-group L2 norms, reported when training diverges.
    pub fn parameter_norms(&self) -> Vec<(String, f64)> {
        self.linears().into_iter().map(|(n, l)| (n, l.sum_sq().sqrt())).collect()
    }

    /// Forward pass. `rng = Some(_)` enables dropout.
    pub fn forward<R: Rng + ?Sized>(&self, batch: &Batch, mut rng: Option<&mut R>) -> Result<Forward, GnnError> {
        if batch.x.ncols() != self.fusion.input_dim() {
            return Err(GnnError::Config(format!(
                "node features have {} columns, model expects {}",
                batch.x.ncols(),
                self.fusion.input_dim()
            )));
        }
        let p = self.config.dropout;
        let mut mask = |shape: (usize, usize)| match rng.as_deref_mut() {
            Some(r) if p > 0.0 => Some(dropout_mask(shape, p, r)),
            _ => None,
        };
        let h0 = self.fusion.forward(&batch.x);
        let mut h = h0.clone();
        let mut layers = Vec::with_capacity(self.gin.len());
        for mlp in &self.gin {
            let agg = aggregate(&h, &batch.edges);
            let z1 = mlp[0].forward(&agg);
            let r1 = relu(&z1);
            let z2 = mlp[1].forward(&r1);
            let m = mask(z2.dim());
            let mut next = relu(&z2);
            if let Some(m) = &m {
                next *= m;
            }
            layers.push(LayerCache { input: h, agg, z1, r1, z2, mask: m });
            h = next;
        }
        let pooled = mean_readout(&h, &batch.offsets)?;
        let q = self.head[0].forward(&pooled);
        let head_mask = mask(q.dim());
        let mut r = relu(&q);
        if let Some(m) = &head_mask {
            r *= m;
        }
        let out = self.head[1].forward(&r);
        Ok(Forward { h0, layers, pooled, q, r, head_mask, out })
    }

    /// Mean loss over the batch and `dL/d(out)`.
    pub fn loss(&self, out: &Array2<f64>, gold: &[&[usize]]) -> Result<(f64, Array2<f64>), GnnError> {
        let g = out.nrows();
        let mut total = 0.0;
        let mut dout = Array2::zeros(out.dim());
        for (i, labels) in gold.iter().enumerate() {
            let row = out.row(i).to_vec();
            if labels.iter().any(|&l| l >= row.len()) {
                return Err(GnnError::Precondition("gold label outside the taxonomy".into()));
            }
            let (loss, grad) = if self.config.task.is_multi_label() {
                zlpr_with_grad(&row, labels)
            } else {
                let gold = *labels
                    .first()
                    .ok_or_else(|| GnnError::Precondition("binary example without a label".into()))?;
                ce_with_grad(&row, gold)
            };
            total += loss;
            for (j, d) in grad.into_iter().enumerate() {
                dout[[i, j]] = d / g as f64;
            }
        }
        Ok((total / g as f64, dout))
    }

    /// Gradients of the loss whose output gradient is `dout`, in [`GinModel::linears`] order.
    pub fn backward(&self, batch: &Batch, fwd: &Forward, dout: &Array2<f64>) -> Vec<Linear> {
        let mut grads = self.zero_grads();
        let last = grads.len() - 1;
        let mut dr = self.head[1].backward(&fwd.r, dout, &mut grads[last]);
        if let Some(m) = &fwd.head_mask {
            dr *= m;
        }
        let dq = relu_backward(&fwd.q, &dr);
        let dpooled = self.head[0].backward(&fwd.pooled, &dq, &mut grads[last - 1]);
        let mut dh = mean_readout_backward(&dpooled, &batch.offsets);
        for (l, (mlp, cache)) in self.gin.iter().zip(&fwd.layers).enumerate().rev() {
            if let Some(m) = &cache.mask {
                dh *= m;
            }
            let dz2 = relu_backward(&cache.z2, &dh);
            let (g0, g1) = grads[1 + 2 * l..3 + 2 * l].split_at_mut(1);
            let dr1 = mlp[1].backward(&cache.r1, &dz2, &mut g1[0]);
            let dz1 = relu_backward(&cache.z1, &dr1);
            let dagg = mlp[0].backward(&cache.agg, &dz1, &mut g0[0]);
            // Aggregation is symmetric, so its transpose is itself.
            dh = aggregate(&dagg, &batch.edges);
            debug_assert_eq!(cache.input.dim(), dh.dim());
        }
        debug_assert_eq!(fwd.h0.dim(), dh.dim());
        self.fusion.backward(&batch.x, &dh, &mut grads[0]);
        grads
    }

    /// Head outputs without dropout.
    pub fn infer(&self, graphs: &[&GraphInput]) -> Result<Array2<f64>, GnnError> {
        let mut rows = Vec::with_capacity(graphs.len());
        for chunk in graphs.chunks(64) {
            let batch = Batch::new(chunk)?;
            let fwd = self.forward::<rand_chacha::ChaCha8Rng>(&batch, None)?;
            rows.push(fwd.out);
        }
        if rows.is_empty() {
            return Ok(Array2::zeros((0, self.config.labels())));
        }
        let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
        ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| GnnError::Config(e.to_string()))
    }
}

/// Largest relative error per parameter group between analytic gradients
/// and central differences of the dropout-free loss.
///
/// Relative error is `|a - n| / max(|a|, |n|, floor)` over the whole group,
/// measured in L2 norm.
pub fn gradient_check(model: &GinModel, graphs: &[&GraphInput], step: f64) -> Result<Vec<(String, f64)>, GnnError> {
    let batch = Batch::new(graphs)?;
    let gold: Vec<&[usize]> = graphs.iter().map(|g| g.labels.as_slice()).collect();
    let loss_of = |m: &GinModel| -> Result<f64, GnnError> {
        let f = m.forward::<rand_chacha::ChaCha8Rng>(&batch, None)?;
        Ok(m.loss(&f.out, &gold)?.0)
    };
    let fwd = model.forward::<rand_chacha::ChaCha8Rng>(&batch, None)?;
    let (_, dout) = model.loss(&fwd.out, &gold)?;
    let analytic = model.backward(&batch, &fwd, &dout);

    let mut probe = model.clone();
    let names: Vec<String> = model.linears().into_iter().map(|(n, _)| n).collect();
    let mut out = Vec::with_capacity(names.len());
    for (gi, name) in names.into_iter().enumerate() {
        let mut numeric = analytic[gi].zeros_like();
        let count_w = numeric.w.len();
        for k in 0..count_w + numeric.b.len() {
            let orig = *scalar_mut(&mut probe, gi, k);
            *scalar_mut(&mut probe, gi, k) = orig + step;
            let plus = loss_of(&probe)?;
            *scalar_mut(&mut probe, gi, k) = orig - step;
            let minus = loss_of(&probe)?;
            *scalar_mut(&mut probe, gi, k) = orig;
            *scalar_mut_linear(&mut numeric, k) = (plus - minus) / (2.0 * step);
        }
        let a = &analytic[gi];
        let diff = (a.w.clone() - &numeric.w).mapv(|x| x * x).sum() + (a.b.clone() - &numeric.b).mapv(|x| x * x).sum();
        let scale = a.sum_sq().sqrt().max(numeric.sum_sq().sqrt()).max(1e-12);
        out.push((name, diff.sqrt() / scale));
    }
    Ok(out)
}

/// Scalar `k` of group `group`, weights first (row-major) then bias.
fn scalar_mut(model: &mut GinModel, group: usize, k: usize) -> &mut f64 {
    scalar_mut_linear(model.linears_mut().swap_remove(group), k)
}

fn scalar_mut_linear(l: &mut Linear, k: usize) -> &mut f64 {
    let count_w = l.w.len();
    if k < count_w {
        let cols = l.w.ncols();
        &mut l.w[[k / cols, k % cols]]
    } else {
        &mut l.b[k - count_w]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    pub(crate) fn random_tree(n: usize, cols: usize, labels: Vec<usize>, seed: u64) -> GraphInput {
        let mut rng = crate::seed::rng(seed);
        let edges = (1..n).map(|v| (v, rng.gen_range(0..v))).collect();
        let x = Array2::from_shape_simple_fn((n, cols), || rng.gen_range(-1.0..1.0));
        GraphInput { id: format!("t{seed}"), x, edges, labels }
    }

    fn small(task: TaskKind) -> GinModel {
        let cfg = GinConfig { task, embed_dim: 3, hidden: 5, layers: 2, dropout: 0.5 };
        GinModel::new(cfg, 11).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (task, labels) in [(TaskKind::Binary, vec![1]), (TaskKind::Framing, vec![0, 4, 9])] {
            let model = small(task);
            let a = random_tree(5, 6, labels.clone(), 1);
            let b = random_tree(5, 6, labels, 2);
            for (name, err) in gradient_check(&model, &[&a, &b], 1e-4).unwrap() {
                assert!(err <= 1e-4, "{task} {name}: {err}");
            }
        }
    }

    #[test]
    fn node_permutation_leaves_output_unchanged() {
        let model = small(TaskKind::Binary);
        let g = random_tree(6, 6, vec![0], 3);
        let perm = [3, 0, 5, 1, 4, 2];
        let mut x = g.x.clone();
        for (old, &new) in perm.iter().enumerate() {
            x.row_mut(new).assign(&g.x.row(old));
        }
        let edges = g.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let p = GraphInput { x, edges, ..g.clone() };
        let a = model.infer(&[&g]).unwrap();
        let b = model.infer(&[&p]).unwrap();
        assert!((a - b).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn batching_matches_single_graphs() {
        let model = small(TaskKind::Framing);
        let a = random_tree(4, 6, vec![1], 4);
        let b = random_tree(7, 6, vec![2], 5);
        let both = model.infer(&[&a, &b]).unwrap();
        let one = model.infer(&[&b]).unwrap();
        assert!((both.row(1).to_owned() - one.row(0)).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn config_errors() {
        let mut cfg = GinConfig::new(TaskKind::Binary, 4);
        cfg.dropout = 1.0;
        assert!(GinModel::new(cfg, 0).is_err());
        let model = small(TaskKind::Binary);
        let g = random_tree(3, 4, vec![0], 1);
        assert!(model.infer(&[&g]).is_err());
    }

    #[test]
    fn parameter_count_adds_up() {
        let model = small(TaskKind::Binary);
        // fusion 6*5+5, 4 gin linears 5*5+5, head 5*5+5 and 5*2+2
        assert_eq!(model.parameter_count(), 35 + 4 * 30 + 30 + 12);
    }
}
