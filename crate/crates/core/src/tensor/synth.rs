//! Synthetic tensors with known ground truth.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ObservedEntry, TensorShape, ValueKind};
use crate::bnn::{forward_value, Activation, NetworkSpec};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

pub const GROUND_TRUTH_FORMAT: &str = "streamfact-ground-truth";
pub const GROUND_TRUTH_VERSION: u32 = 1;

/// How noiseless values are computed from the true embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// `Σ_t Π_k u^k_{i_k, t}`.
    MultilinearCp,
    /// A random network over the concatenated embeddings, each weight drawn
    /// from N(0, 1) and then zeroed with probability `sparsity`.
    RandomMlp { hidden: Vec<usize>, activation: Activation, sparsity: f64 },
}

/// Everything needed to recompute the noiseless values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub shape: TensorShape,
    pub kind: ValueKind,
    pub rank: usize,
    pub noise_sd: f64,
    pub generator: GeneratorSpec,
    /// Per mode, a `d_k × rank` row-major table.
    pub embeddings: Vec<Vec<f64>>,
    /// Network and flat weights, for the random-mlp generator.
    pub network: Option<NetworkSpec>,
    pub weights: Option<Vec<f64>>,
    pub indices: Vec<Vec<usize>>,
    pub noiseless: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub entries: Vec<ObservedEntry>,
    pub truth: GroundTruth,
}

impl GroundTruth {
    fn input(&self, index: &[usize]) -> Vec<f64> {
        let r = self.rank;
        index
            .iter()
            .zip(&self.embeddings)
            .flat_map(|(&i, table)| table[i * r..(i + 1) * r].iter().copied())
            .collect()
    }

    /// Noiseless value of one cell.
    pub fn evaluate(&self, index: &[usize]) -> Result<f64> {
        self.shape.check_index(index)?;
        match &self.generator {
            GeneratorSpec::MultilinearCp => {
                let r = self.rank;
                Ok((0..r)
                    .map(|t| index.iter().zip(&self.embeddings).map(|(&i, table)| table[i * r + t]).product::<f64>())
                    .sum())
            }
            GeneratorSpec::RandomMlp { .. } => {
                let (Some(net), Some(w)) = (&self.network, &self.weights) else {
                    return Err(Error::arg("random-mlp ground truth lacks its network"));
                };
                forward_value(net, w, &self.input(index))
            }
        }
    }

    /// `true` for each network weight the generator set to zero.
    pub fn zero_mask(&self) -> Option<Vec<bool>> {
        self.weights.as_ref().map(|w| w.iter().map(|&x| x == 0.0).collect())
    }

    pub fn save<W: std::io::Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer(&mut writer, self)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn load<R: std::io::Read>(reader: R) -> Result<Self> {
        let t: GroundTruth = serde_json::from_reader(reader)?;
        if t.format != GROUND_TRUTH_FORMAT || t.version != GROUND_TRUTH_VERSION {
            return Err(Error::arg(format!("unsupported ground truth '{}' v{}", t.format, t.version)));
        }
        Ok(t)
    }
}

/// Draws `n_entries` distinct cells and their values.
///
/// Embeddings come from N(0, 1). Continuous values add N(0, noise_sd²)
/// noise; binary values are `1{f + ε > 0}` with ε ~ N(0, 1), i.e. a
/// Bernoulli draw with probability `Φ(f)`.
pub fn synth_generate(
    shape: &TensorShape,
    rank: usize,
    kind: ValueKind,
    generator: &GeneratorSpec,
    noise_sd: f64,
    n_entries: usize,
    seed: u64,
) -> Result<SynthOutput> {
    if rank == 0 {
        return Err(Error::arg("rank must be positive"));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::arg(format!("noise sd {noise_sd} must be non-negative")));
    }
    let total = shape.total_cells().filter(|&t| t <= usize::MAX as u64);
    let total = match total {
        Some(t) if n_entries as u64 <= t => t as usize,
        _ => {
            return Err(Error::arg(format!(
                "cannot draw {n_entries} distinct entries from a tensor with {:?} cells",
                shape.total_cells()
            )))
        }
    };
    let mut rng = stream(seed, Purpose::Synth);
    let embeddings: Vec<Vec<f64>> = shape
        .dims()
        .iter()
        .map(|&d| (0..d * rank).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();

    let (network, weights) = match generator {
        GeneratorSpec::MultilinearCp => (None, None),
        GeneratorSpec::RandomMlp { hidden, activation, sparsity } => {
            if !(0.0..=1.0).contains(sparsity) {
                return Err(Error::arg(format!("sparsity {sparsity} not in [0, 1]")));
            }
            let net = NetworkSpec::for_ranks(&vec![rank; shape.mode_count()], hidden, *activation)?;
            let w: Vec<f64> = (0..net.weight_count())
                .map(|_| {
                    let x: f64 = rng.sample(StandardNormal);
                    if rng.random::<f64>() < *sparsity {
                        0.0
                    } else {
                        x
                    }
                })
                .collect();
            (Some(net), Some(w))
        }
    };

    let mut cells: Vec<usize> = index::sample(&mut rng, total, n_entries).into_vec();
    cells.sort_unstable();
    let indices: Vec<Vec<usize>> = cells
        .into_iter()
        .map(|mut c| {
            let mut idx = vec![0; shape.mode_count()];
            for (slot, &d) in idx.iter_mut().zip(shape.dims()).rev() {
                *slot = c % d;
                c /= d;
            }
            idx
        })
        .collect();

    let mut truth = GroundTruth {
        format: GROUND_TRUTH_FORMAT.into(),
        version: GROUND_TRUTH_VERSION,
        seed,
        shape: shape.clone(),
        kind,
        rank,
        noise_sd,
        generator: generator.clone(),
        embeddings,
        network,
        weights,
        indices: Vec::new(),
        noiseless: Vec::with_capacity(n_entries),
    };
    for idx in &indices {
        let f = truth.evaluate(idx)?;
        truth.noiseless.push(f);
    }
    truth.indices = indices;

    // Cells come out sorted; shuffle the order in which they are listed so
    // files do not carry a positional pattern.
    let mut order: Vec<usize> = (0..n_entries).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    truth.indices = order.iter().map(|&i| truth.indices[i].clone()).collect();
    truth.noiseless = order.iter().map(|&i| truth.noiseless[i]).collect();

    let entries = truth
        .indices
        .iter()
        .zip(&truth.noiseless)
        .map(|(idx, &f)| {
            let eps: f64 = rng.sample(StandardNormal);
            let value = match kind {
                ValueKind::Continuous => f + noise_sd * eps,
                ValueKind::Binary => {
                    if f + eps > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            ObservedEntry::new(idx.clone(), value)
        })
        .collect();
    Ok(SynthOutput { entries, truth })
}
