//! Residual vector quantization: k-means codebooks, residual encoding and
//! accumulated-layer decoding.
//!
//! Vectors are stored row-major in flat `f64` slices alongside their dim.
//! Every tie (nearest centroid, farthest point) goes to the lowest index.

mod synth;

pub use synth::{synth_corpus, CodecSpec, Dominance, GeometrySpec, SynthCorpus, SynthSpec, WordSpec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ProbeError, Result};

pub const DEFAULT_KMEANS_ITERS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Vec<f64>,
    k: usize,
    dim: usize,
}

impl Codebook {
    pub fn new(centroids: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || centroids.is_empty() || !centroids.len().is_multiple_of(dim) {
            return Err(ProbeError::Validation(format!(
                "{} centroid values do not form rows of dim {dim}",
                centroids.len()
            )));
        }
        Ok(Self {
            k: centroids.len() / dim,
            centroids,
            dim,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, i: usize) -> &[f64] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    /// Index of the nearest centroid and its squared distance; lowest index wins ties.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.k {
            let d = sq_dist(x, self.centroid(i));
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_data(data: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(ProbeError::Validation(format!(
            "{} values do not form rows of dim {dim}",
            data.len()
        )));
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(ProbeError::Validation(format!("non-finite value at index {i}")));
    }
    Ok(data.len() / dim)
}

/// k-means++ seeding; once every point coincides with a chosen centre the
/// remaining centres repeat the first point.
fn kmeans_pp(data: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let first = rng.random_range(0..n);
    let mut centroids = row(first).to_vec();
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Round-off can leave `acc` a hair below `target`.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            first
        };
        let c = row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), &c));
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

fn assign(data: &[f64], book: &Codebook, labels: &mut [usize], dists: &mut [f64]) -> bool {
    let mut changed = false;
    for (i, x) in data.chunks_exact(book.dim).enumerate() {
        let (c, d) = book.nearest(x);
        changed |= labels[i] != c;
        labels[i] = c;
        dists[i] = d;
    }
    changed
}

fn update_means(data: &[f64], book: &mut Codebook, labels: &[usize]) -> Vec<usize> {
    let dim = book.dim;
    let mut sums = vec![0.0; book.k * dim];
    let mut counts = vec![0usize; book.k];
    for (x, &c) in data.chunks_exact(dim).zip(labels) {
        counts[c] += 1;
        for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(x) {
            *s += v;
        }
    }
    for c in 0..book.k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            for (dst, s) in book.centroids[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(&sums[c * dim..(c + 1) * dim])
            {
                *dst = s / n;
            }
        }
    }
    counts
}

/// Lloyd's k-means with k-means++ initialization.
///
/// Runs at most `iters` assign/update rounds, stopping early at a fixed point.
/// An empty cluster is re-seeded with the point farthest from its current
/// centroid. Deterministic given `(data, k, iters, seed)`.
pub fn kmeans_fit(data: &[f64], dim: usize, k: usize, iters: usize, seed: u64) -> Result<Codebook> {
    let n = check_data(data, dim)?;
    if k == 0 || iters == 0 {
        return Err(ProbeError::Validation("k and iters must be positive".into()));
    }
    if n < k {
        return Err(ProbeError::Validation(format!(
            "k-means needs at least k={k} points, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut book = Codebook::new(kmeans_pp(data, dim, k, &mut rng), dim)?;
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];

    for _ in 0..iters {
        let changed = assign(data, &book, &mut labels, &mut dists);
        let counts = update_means(data, &mut book, &labels);
        let mut repaired = false;
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = dists
                .iter()
                .enumerate()
                .fold(0, |best, (i, &d)| if d > dists[best] { i } else { best });
            book.centroids[c * dim..(c + 1) * dim].copy_from_slice(&data[far * dim..(far + 1) * dim]);
            dists[far] = 0.0;
            repaired = true;
        }
        if !changed && !repaired {
            break;
        }
    }
    Ok(book)
}

/// A trained multi-layer residual quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct RvqCodec {
    layers: Vec<Codebook>,
    dim: usize,
    /// Mean squared residual per element after each layer, on the training data.
    pub train_mse_per_layer: Vec<f64>,
}

impl RvqCodec {
    pub fn from_codebooks(layers: Vec<Codebook>) -> Result<Self> {
        let dim = layers
            .first()
            .ok_or_else(|| ProbeError::Validation("codec needs at least one layer".into()))?
            .dim;
        if layers.iter().any(|l| l.dim != dim) {
            return Err(ProbeError::Validation("codebooks must share dim".into()));
        }
        Ok(Self {
            layers,
            dim,
            train_mse_per_layer: Vec::new(),
        })
    }

    pub fn layers(&self) -> &[Codebook] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Trains layer 1 on `data` and each later layer on the residuals left by the
/// layers before it.
pub fn rvq_train(data: &[f64], dim: usize, num_layers: usize, k: usize, iters: usize, seed: u64) -> Result<RvqCodec> {
    let n = check_data(data, dim)?;
    if num_layers == 0 {
        return Err(ProbeError::Validation("num_layers must be positive".into()));
    }
    let mut residual = data.to_vec();
    let mut layers = Vec::with_capacity(num_layers);
    let mut mse = Vec::with_capacity(num_layers);
    for layer in 0..num_layers {
        let book = kmeans_fit(&residual, dim, k, iters, seed.wrapping_add(layer as u64))?;
        let mut sse = 0.0;
        for r in residual.chunks_exact_mut(dim) {
            let (c, _) = book.nearest(r);
            for (v, m) in r.iter_mut().zip(book.centroid(c)) {
                *v -= m;
            }
            sse += r.iter().map(|v| v * v).sum::<f64>();
        }
        mse.push(sse / (n * dim) as f64);
        layers.push(book);
    }
    let mut codec = RvqCodec::from_codebooks(layers)?;
    codec.train_mse_per_layer = mse;
    Ok(codec)
}

/// Codes plus the running reconstruction kept while encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeTrace {
    pub codes: Vec<usize>,
    pub reconstruction: Vec<f64>,
}

pub fn rvq_encode_traced(codec: &RvqCodec, x: &[f64]) -> Result<EncodeTrace> {
    if x.len() != codec.dim {
        return Err(ProbeError::Validation(format!(
            "vector has dim {} but codec dim is {}",
            x.len(),
            codec.dim
        )));
    }
    let mut residual = x.to_vec();
    let mut reconstruction = vec![0.0; codec.dim];
    let mut codes = Vec::with_capacity(codec.layers.len());
    for book in &codec.layers {
        let (c, _) = book.nearest(&residual);
        for ((r, acc), m) in residual.iter_mut().zip(&mut reconstruction).zip(book.centroid(c)) {
            *r -= m;
            *acc += m;
        }
        codes.push(c);
    }
    Ok(EncodeTrace { codes, reconstruction })
}

/// One code per layer, each the nearest centroid to the current residual.
pub fn rvq_encode(codec: &RvqCodec, x: &[f64]) -> Result<Vec<usize>> {
    rvq_encode_traced(codec, x).map(|t| t.codes)
}

/// Sum of the selected centroids of layers `1..=upto_layer`.
pub fn rvq_decode_accumulated(codec: &RvqCodec, codes: &[usize], upto_layer: usize) -> Result<Vec<f64>> {
    if upto_layer == 0 || upto_layer > codec.layers.len() {
        return Err(ProbeError::Validation(format!(
            "upto_layer {upto_layer} outside 1..={}",
            codec.layers.len()
        )));
    }
    if codes.len() < upto_layer {
        return Err(ProbeError::Validation(format!(
            "{} codes given for {upto_layer} layers",
            codes.len()
        )));
    }
    let mut out = vec![0.0; codec.dim];
    for (layer, (&code, book)) in codes.iter().zip(&codec.layers).take(upto_layer).enumerate() {
        if code >= book.k {
            return Err(ProbeError::Validation(format!(
                "code {code} out of range for layer {} with k={}",
                layer + 1,
                book.k
            )));
        }
        for (o, m) in out.iter_mut().zip(book.centroid(code)) {
            *o += m;
        }
    }
    Ok(out)
}

/// Accumulated reconstructions for every depth `1..=num_layers`.
pub fn rvq_decode_all_depths(codec: &RvqCodec, codes: &[usize]) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(codec.layers.len());
    for layer in 1..=codec.layers.len() {
        out.push(rvq_decode_accumulated(codec, codes, layer)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn sse(data: &[f64], book: &Codebook) -> f64 {
        data.chunks_exact(book.dim()).map(|x| book.nearest(x).1).sum()
    }

    #[test]
    fn exact_fit_on_k_distinct_points() {
        let data = vec![0.0, 0.0, 5.0, 1.0, -3.0, 2.0, 9.0, 9.0];
        let book = kmeans_fit(&data, 2, 4, 10, 3).unwrap();
        let mut found: Vec<Vec<f64>> = (0..4).map(|i| book.centroid(i).to_vec()).collect();
        found.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<Vec<f64>> = data.chunks(2).map(<[f64]>::to_vec).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(found, want);
        assert_eq!(sse(&data, &book), 0.0);
    }

    #[test]
    fn single_cluster_of_identical_points() {
        let data = [1.5, -2.0].repeat(7);
        let book = kmeans_fit(&data, 2, 1, 5, 0).unwrap();
        assert_eq!(book.centroid(0), &[1.5, -2.0]);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            kmeans_fit(&[1.0, 2.0], 1, 3, 5, 0),
            Err(ProbeError::Validation(_))
        ));
    }

    #[test]
    fn blobs_beat_random_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let centers = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
        let mut data = Vec::new();
        for i in 0..300 {
            let c = centers[i % 3];
            for d in c {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(d + 0.5 * z);
            }
        }
        let book = kmeans_fit(&data, 2, 3, 50, 9).unwrap();
        let fitted = sse(&data, &book) / 300.0;

        // Baseline: uniformly random labels, each cluster at its mean.
        let labels: Vec<usize> = (0..300).map(|_| rng.random_range(0..3)).collect();
        let mut base = Codebook::new(vec![0.0; 6], 2).unwrap();
        update_means(&data, &mut base, &labels);
        let baseline: f64 = data
            .chunks_exact(2)
            .zip(&labels)
            .map(|(x, &c)| sq_dist(x, base.centroid(c)))
            .sum::<f64>()
            / 300.0;
        assert!(fitted <= baseline, "{fitted} > {baseline}");
        assert!(fitted < 0.6);
    }

    #[test]
    fn kmeans_is_deterministic() {
        let data = gaussian(200, 4, 1);
        assert_eq!(
            kmeans_fit(&data, 4, 8, 20, 77).unwrap(),
            kmeans_fit(&data, 4, 8, 20, 77).unwrap()
        );
    }

    #[test]
    fn trained_centroids_are_distinct() {
        let data = gaussian(500, 3, 2);
        let book = kmeans_fit(&data, 3, 16, 50, 4).unwrap();
        for i in 0..16 {
            for j in i + 1..16 {
                assert!(sq_dist(book.centroid(i), book.centroid(j)).sqrt() > 1e-12);
            }
        }
    }

    #[test]
    fn one_layer_rvq_is_kmeans() {
        let data = gaussian(100, 3, 3);
        let codec = rvq_train(&data, 3, 1, 5, 20, 12).unwrap();
        assert_eq!(codec.layers()[0], kmeans_fit(&data, 3, 5, 20, 12).unwrap());
    }

    #[test]
    fn discrete_data_is_lossless() {
        let points = [[1.0, 2.0], [-4.0, 0.5], [3.0, 3.0], [0.0, -7.0]];
        let data: Vec<f64> = (0..40).flat_map(|i| points[i % 4]).collect();
        let codec = rvq_train(&data, 2, 3, 4, 20, 8).unwrap();
        assert_eq!(codec.train_mse_per_layer, vec![0.0, 0.0, 0.0]);
        for book in &codec.layers()[1..] {
            for i in 0..book.k() {
                assert_eq!(book.centroid(i), &[0.0, 0.0]);
            }
        }
    }

    #[test]
    fn mse_non_increasing() {
        let data = gaussian(600, 8, 4);
        let codec = rvq_train(&data, 8, 6, 16, 30, 1).unwrap();
        for w in codec.train_mse_per_layer.windows(2) {
            assert!(w[1] <= w[0], "{:?}", codec.train_mse_per_layer);
        }
    }

    fn constructed() -> RvqCodec {
        let l1 = Codebook::new(vec![1.0, 1.0, -2.0, 0.0, 5.0, 5.0], 2).unwrap();
        let l2 = Codebook::new(vec![0.5, 0.5, 0.0, 0.0], 2).unwrap();
        RvqCodec::from_codebooks(vec![l1, l2]).unwrap()
    }

    #[test]
    fn exact_centroid_encodes_to_itself() {
        let codec = constructed();
        let codes = rvq_encode(&codec, &[-2.0, 0.0]).unwrap();
        assert_eq!(codes, vec![1, 1]);
        assert_eq!(rvq_decode_accumulated(&codec, &codes, 2).unwrap(), vec![-2.0, 0.0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let book = Codebook::new(vec![9.0, 9.0, 9.0, -9.0, 1.0, 0.0, 9.0, 0.0, -9.0, 9.0, -1.0, 0.0], 2).unwrap();
        // Centroids 2 and 5 are both at distance 1 from the origin.
        assert_eq!(book.nearest(&[0.0, 0.0]).0, 2);
    }

    #[test]
    fn decode_errors() {
        let codec = constructed();
        assert!(rvq_decode_accumulated(&codec, &[0, 0], 3).is_err());
        assert!(rvq_decode_accumulated(&codec, &[0, 2], 2).is_err());
        assert!(rvq_decode_accumulated(&codec, &[0, 0], 0).is_err());
        assert!(rvq_encode(&codec, &[0.0]).is_err());
    }

    #[test]
    fn decode_recurrence_and_trace() {
        let data = gaussian(300, 4, 6);
        let codec = rvq_train(&data, 4, 4, 8, 20, 2).unwrap();
        for x in data.chunks_exact(4).take(50) {
            let trace = rvq_encode_traced(&codec, x).unwrap();
            let base = rvq_decode_accumulated(&codec, &trace.codes, 1).unwrap();
            assert_eq!(base, codec.layers()[0].centroid(trace.codes[0]));
            for layer in 2..=4 {
                let prev = rvq_decode_accumulated(&codec, &trace.codes, layer - 1).unwrap();
                let cur = rvq_decode_accumulated(&codec, &trace.codes, layer).unwrap();
                let c = codec.layers()[layer - 1].centroid(trace.codes[layer - 1]);
                let rec: Vec<f64> = prev.iter().zip(c).map(|(a, b)| a + b).collect();
                assert_eq!(cur, rec);
            }
            assert_eq!(
                rvq_decode_accumulated(&codec, &trace.codes, 4).unwrap(),
                trace.reconstruction
            );

            // Reconstruction error never exceeds the distance to the nearest layer-1 centroid.
            let err = sq_dist(x, &trace.reconstruction).sqrt();
            let brute = (0..codec.layers()[0].k())
                .map(|i| sq_dist(x, codec.layers()[0].centroid(i)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(err <= brute + 1e-12);
        }
    }
}
