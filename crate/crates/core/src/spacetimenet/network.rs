use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::catalog::RepCatalog;
use crate::dataset::SpacetimeCloud;
use crate::numerics::{c64, Complex64};
use crate::{Error, Execution, Result};

/// How the `j`-sum of the layer update is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Plain sum over neighbours.
    Sum,
    /// Sum divided by the number of points.
    #[default]
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub num_layers: usize,
    pub num_channels: usize,
    pub batch_size: usize,
    pub num_classes: usize,
    pub aggregation: Aggregation,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_layers: 3,
            num_channels: 3,
            batch_size: 16,
            num_classes: 2,
            aggregation: Aggregation::Mean,
            seed: 0,
            execution: Execution::Serial,
        }
    }
}

impl NetworkConfig {
    fn check(&self) -> Result<()> {
        if self.num_layers == 0 || self.num_channels == 0 || self.batch_size == 0 || self.num_classes == 0 {
            return Err(Error::domain("layers, channels, batch size and classes must be positive"));
        }
        Ok(())
    }
}

/// Filter weights `f_{qg}` and mixing weights `W_{qcgd}` of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub reps: usize,
    pub degeneracy: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[q][g]`.
    pub filter: Vec<Complex64>,
    /// `[q][c][g][d]`.
    pub mixing: Vec<Complex64>,
}

impl LayerWeights {
    pub fn zeros(reps: usize, degeneracy: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            reps,
            degeneracy,
            in_channels,
            out_channels,
            filter: vec![Complex64::ZERO; reps * degeneracy],
            mixing: vec![Complex64::ZERO; reps * out_channels * degeneracy * in_channels],
        }
    }

    pub fn f(&self, q: usize, g: usize) -> Complex64 {
        self.filter[q * self.degeneracy + g]
    }

    fn w_index(&self, q: usize, c: usize, g: usize, d: usize) -> usize {
        ((q * self.out_channels + c) * self.degeneracy + g) * self.in_channels + d
    }

    pub fn w(&self, q: usize, c: usize, g: usize, d: usize) -> Complex64 {
        self.mixing[self.w_index(q, c, g, d)]
    }
}

/// Affine map from invariant channel means to class logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub classes: usize,
    pub channels: usize,
    /// `[k][c]`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkWeights {
    pub layers: Vec<LayerWeights>,
    pub readout: Readout,
}

fn complex_normal(rng: &mut ChaCha8Rng, sigma: f64) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c64(re, im) * (sigma / std::f64::consts::SQRT_2)
}

impl NetworkWeights {
    pub fn zeros(config: &NetworkConfig, catalog: &RepCatalog) -> Self {
        let (q, g) = (catalog.len(), catalog.degeneracy());
        let layers = (0..config.num_layers)
            .map(|k| {
                let cin = if k == 0 { 1 } else { config.num_channels };
                LayerWeights::zeros(q, g, cin, config.num_channels)
            })
            .collect();
        Self {
            layers,
            readout: Readout {
                classes: config.num_classes,
                channels: config.num_channels,
                weight: vec![0.0; config.num_classes * config.num_channels],
                bias: vec![0.0; config.num_classes],
            },
        }
    }

    /// Complex normal filter weights of unit variance, mixing weights with
    /// variance `1/(g·d)`, readout weights with variance `1/c`, zero bias.
    pub fn init(config: &NetworkConfig, catalog: &RepCatalog) -> Result<Self> {
        config.check()?;
        let mut w = Self::zeros(config, catalog);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for layer in &mut w.layers {
            for f in &mut layer.filter {
                *f = complex_normal(&mut rng, 1.0);
            }
            let sigma = 1.0 / ((layer.degeneracy * layer.in_channels) as f64).sqrt();
            for m in &mut layer.mixing {
                *m = complex_normal(&mut rng, sigma);
            }
        }
        let sigma = 1.0 / (config.num_channels as f64).sqrt();
        for a in &mut w.readout.weight {
            let z: f64 = StandardNormal.sample(&mut rng);
            *a = sigma * z;
        }
        Ok(w)
    }

    /// All weights as real numbers: per layer the filter then mixing
    /// weights as `(re, im)` pairs, then readout weight and bias.
    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.filter.iter().chain(&l.mixing).flat_map(|z| [z.re, z.im]));
        }
        out.extend_from_slice(&self.readout.weight);
        out.extend_from_slice(&self.readout.bias);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::shape(format!(
                "{} parameters for a network with {}",
                params.len(),
                self.num_params()
            )));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for z in l.filter.iter_mut().chain(l.mixing.iter_mut()) {
                *z = c64(it.next().expect("length checked"), it.next().expect("length checked"));
            }
        }
        for x in self.readout.weight.iter_mut().chain(self.readout.bias.iter_mut()) {
            *x = it.next().expect("length checked");
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        let complex: usize = self.layers.iter().map(|l| l.filter.len() + l.mixing.len()).sum();
        2 * complex + self.readout.weight.len() + self.readout.bias.len()
    }

    fn add_scaled(&mut self, other: &Self, s: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.filter.iter_mut().zip(&b.filter) {
                *x += y * s;
            }
            for (x, y) in a.mixing.iter_mut().zip(&b.mixing) {
                *x += y * s;
            }
        }
        for (x, y) in self.readout.weight.iter_mut().zip(&other.readout.weight) {
            *x += y * s;
        }
        for (x, y) in self.readout.bias.iter_mut().zip(&other.readout.bias) {
            *x += y * s;
        }
    }

    fn check(&self, config: &NetworkConfig, catalog: &RepCatalog) -> Result<()> {
        let expect = Self::zeros(config, catalog);
        let same = self.layers.len() == expect.layers.len()
            && self.layers.iter().zip(&expect.layers).all(|(a, b)| {
                (a.reps, a.degeneracy, a.in_channels, a.out_channels, a.filter.len(), a.mixing.len())
                    == (b.reps, b.degeneracy, b.in_channels, b.out_channels, b.filter.len(), b.mixing.len())
            })
            && self.readout.weight.len() == expect.readout.weight.len()
            && self.readout.bias.len() == expect.readout.bias.len();
        if same {
            Ok(())
        } else {
            Err(Error::shape("weights do not match the network configuration and catalog"))
        }
    }
}

/// Activations `V[i, c, R]` of one cloud over points `i`, channels `c` and
/// the concatenated representation index `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub points: usize,
    pub channels: usize,
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl Activation {
    pub fn zeros(points: usize, channels: usize, dim: usize) -> Self {
        Self {
            points,
            channels,
            dim,
            data: vec![Complex64::ZERO; points * channels * dim],
        }
    }

    #[inline]
    pub fn index(&self, i: usize, c: usize, r: usize) -> usize {
        (i * self.channels + c) * self.dim + r
    }

    pub fn get(&self, i: usize, c: usize, r: usize) -> Complex64 {
        self.data[self.index(i, c, r)]
    }
}

/// Filters `F[i, j, R]` of one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Filters {
    pub points: usize,
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl Filters {
    #[inline]
    pub fn index(&self, i: usize, j: usize, r: usize) -> usize {
        (i * self.points + j) * self.dim + r
    }

    pub fn get(&self, i: usize, j: usize, r: usize) -> Complex64 {
        self.data[self.index(i, j, r)]
    }
}

/// Weight-independent quantities of one cloud: `ΔX` in the `q'` space, the
/// quadratic filter terms `Q[i, j, R, g] = Σ_{s,t} C_{g,R,s,t} ΔX_s ΔX_t`
/// and the input activations.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub points: usize,
    /// `[i][j][s]` over the `q'` representation space.
    pub dx: Vec<Complex64>,
    /// `[i][j][R][g]`.
    pub quad: Vec<Complex64>,
    pub input: Activation,
}

impl Geometry {
    pub fn new(cloud: &SpacetimeCloud, catalog: &RepCatalog) -> Result<Self> {
        if cloud.spatial_dims != catalog.spatial_dims {
            return Err(Error::domain(format!(
                "cloud has {} spatial dimensions, network expects {}",
                cloud.spatial_dims, catalog.spatial_dims
            )));
        }
        let n = cloud.len();
        let e = cloud.event_len();
        let nq = e;
        let (d, g_max) = (catalog.total_dim(), catalog.degeneracy());
        let qp = catalog.offset(catalog.embedding);
        let embed = |v: &[f64]| -> Vec<Complex64> {
            (0..nq)
                .map(|r| (0..e).map(|s| catalog.embed[(r, s)] * v[s]).sum())
                .collect()
        };

        let mut dx = vec![Complex64::ZERO; n * n * nq];
        for i in 0..n {
            for j in 0..n {
                let diff: Vec<f64> = cloud.event(j).iter().zip(cloud.event(i)).map(|(a, b)| a - b).collect();
                dx[(i * n + j) * nq..(i * n + j + 1) * nq].copy_from_slice(&embed(&diff));
            }
        }

        let mut quad = vec![Complex64::ZERO; n * n * d * g_max];
        for &(g, r, s, t, v) in catalog.cg_entries() {
            let in_qp = |x: usize| x >= qp && x < qp + nq;
            if !(in_qp(s) && in_qp(t)) {
                continue;
            }
            for ij in 0..n * n {
                let x = &dx[ij * nq..(ij + 1) * nq];
                quad[(ij * d + r) * g_max + g] += v * x[s - qp] * x[t - qp];
            }
        }

        let mut input = Activation::zeros(n, 1, d);
        let centroid: Vec<f64> = (0..e)
            .map(|s| (0..n).map(|i| cloud.event(i)[s]).sum::<f64>() / n as f64)
            .collect();
        for i in 0..n {
            let k = input.index(i, 0, catalog.offset(catalog.trivial));
            input.data[k] = Complex64::ONE;
            let centred: Vec<f64> = cloud.event(i).iter().zip(&centroid).map(|(a, b)| a - b).collect();
            for (r, z) in embed(&centred).into_iter().enumerate() {
                let k = input.index(i, 0, qp + r);
                input.data[k] = z;
            }
        }
        Ok(Self {
            points: n,
            dx,
            quad,
            input,
        })
    }

    /// `F[i,j,R] = δ_{R∈q'} ΔX + Σ_g f_{q(R),g} Q[i,j,R,g]`.
    pub fn filters(&self, layer: &LayerWeights, catalog: &RepCatalog) -> Filters {
        let (n, d, g_max) = (self.points, catalog.total_dim(), catalog.degeneracy());
        let qp = catalog.offset(catalog.embedding);
        let nq = catalog.reps[catalog.embedding].dim();
        let mut data = vec![Complex64::ZERO; n * n * d];
        for ij in 0..n * n {
            for r in 0..d {
                let q = catalog.owner(r);
                let mut acc = Complex64::ZERO;
                for g in 0..g_max {
                    acc += layer.f(q, g) * self.quad[(ij * d + r) * g_max + g];
                }
                if r >= qp && r < qp + nq {
                    acc += self.dx[ij * nq + r - qp];
                }
                data[ij * d + r] = acc;
            }
        }
        Filters { points: n, dim: d, data }
    }
}

/// Builds the layer filters for one cloud.
pub fn build_filters(cloud: &SpacetimeCloud, layer: &LayerWeights, catalog: &RepCatalog) -> Result<Filters> {
    if layer.reps != catalog.len() || layer.degeneracy != catalog.degeneracy() {
        return Err(Error::domain("filter weights do not match the catalog"));
    }
    Ok(Geometry::new(cloud, catalog)?.filters(layer, catalog))
}

fn aggregation_scale(agg: Aggregation, points: usize) -> f64 {
    match agg {
        Aggregation::Sum => 1.0,
        Aggregation::Mean => 1.0 / points as f64,
    }
}

/// `U[i, R, g, d]` kept for the backward pass.
struct LayerCache {
    u: Vec<Complex64>,
}

fn layer_forward_cached(
    v: &Activation,
    filters: &Filters,
    w: &LayerWeights,
    catalog: &RepCatalog,
    agg: Aggregation,
) -> (Activation, LayerCache) {
    let (n, d, cin, cout, g_max) = (v.points, v.dim, v.channels, w.out_channels, w.degeneracy);
    let scale = aggregation_scale(agg, n);
    let mut p = vec![Complex64::ZERO; d * d * cin];
    let mut u = vec![Complex64::ZERO; n * d * g_max * cin];
    let mut out = Activation::zeros(n, cout, d);
    for i in 0..n {
        // P[S, T, d] = scale Σ_j F[i, j, S] V[j, d, T]
        p.fill(Complex64::ZERO);
        for j in 0..n {
            let f = &filters.data[filters.index(i, j, 0)..filters.index(i, j, 0) + d];
            for dd in 0..cin {
                let vj = &v.data[v.index(j, dd, 0)..v.index(j, dd, 0) + d];
                for (s, fs) in f.iter().enumerate() {
                    if *fs == Complex64::ZERO {
                        continue;
                    }
                    for (t, vt) in vj.iter().enumerate() {
                        p[(s * d + t) * cin + dd] += fs * vt;
                    }
                }
            }
        }
        // U[R, g, d] = Σ_{S,T} C[g, R, S, T] P[S, T, d]
        let ui = &mut u[i * d * g_max * cin..(i + 1) * d * g_max * cin];
        for &(g, r, s, t, c) in catalog.cg_entries() {
            let cs = c * scale;
            for dd in 0..cin {
                ui[(r * g_max + g) * cin + dd] += cs * p[(s * d + t) * cin + dd];
            }
        }
        // V'[c, R] = Σ_{g,d} W[q(R), c, g, d] U[R, g, d]
        for r in 0..d {
            let q = catalog.owner(r);
            for c in 0..cout {
                let mut acc = Complex64::ZERO;
                for g in 0..g_max {
                    for dd in 0..cin {
                        acc += w.w(q, c, g, dd) * ui[(r * g_max + g) * cin + dd];
                    }
                }
                let k = out.index(i, c, r);
                out.data[k] = acc;
            }
        }
    }
    (out, LayerCache { u })
}

/// One layer update
/// `V'_{iqcr} = Σ_{g,l,s,m,t,d,j} C_{g,qr,ls,mt} F_{ijls} V_{jmdt} W_{qcgd}`,
/// evaluated as three staged contractions (neighbour sum, CG projection,
/// channel mixing). With [`Aggregation::Mean`] the sum over `j` is divided
/// by the number of points.
pub fn layer_forward(
    v: &Activation,
    filters: &Filters,
    w: &LayerWeights,
    catalog: &RepCatalog,
    agg: Aggregation,
) -> Result<Activation> {
    let d = catalog.total_dim();
    if v.dim != d || filters.dim != d || filters.points != v.points || v.channels != w.in_channels {
        return Err(Error::domain("activation, filter and weight shapes disagree"));
    }
    if w.reps != catalog.len() || w.degeneracy != catalog.degeneracy() {
        return Err(Error::domain("layer weights do not match the catalog"));
    }
    Ok(layer_forward_cached(v, filters, w, catalog, agg).0)
}

/// Everything the backward pass needs from one cloud's forward pass.
struct CloudPass {
    geometry: Geometry,
    filters: Vec<Filters>,
    /// `V^0 .. V^L`.
    activations: Vec<Activation>,
    caches: Vec<LayerCache>,
    features: Vec<f64>,
    logits: Vec<f64>,
}

fn forward_cloud(
    cloud: &SpacetimeCloud,
    weights: &NetworkWeights,
    catalog: &RepCatalog,
    config: &NetworkConfig,
) -> Result<CloudPass> {
    let geometry = Geometry::new(cloud, catalog)?;
    let mut activations = vec![geometry.input.clone()];
    let mut filters = Vec::new();
    let mut caches = Vec::new();
    for layer in &weights.layers {
        let f = geometry.filters(layer, catalog);
        let (next, cache) = layer_forward_cached(activations.last().expect("nonempty"), &f, layer, catalog, config.aggregation);
        filters.push(f);
        caches.push(cache);
        activations.push(next);
    }
    let last = activations.last().expect("nonempty");
    let r0 = catalog.offset(catalog.trivial);
    let n = last.points as f64;
    let features: Vec<f64> = (0..last.channels)
        .map(|c| (0..last.points).map(|i| last.get(i, c, r0).re).sum::<f64>() / n)
        .collect();
    let ro = &weights.readout;
    let logits = (0..ro.classes)
        .map(|k| ro.bias[k] + (0..ro.channels).map(|c| ro.weight[k * ro.channels + c] * features[c]).sum::<f64>())
        .collect();
    Ok(CloudPass {
        geometry,
        filters,
        activations,
        caches,
        features,
        logits,
    })
}

fn check_batch(clouds: &[SpacetimeCloud], weights: &NetworkWeights, catalog: &RepCatalog, config: &NetworkConfig) -> Result<()> {
    config.check()?;
    weights.check(config, catalog)?;
    if let Some(first) = clouds.first() {
        if clouds.iter().any(|c| c.len() != first.len()) {
            return Err(Error::domain("clouds in a batch must share their point count"));
        }
    }
    Ok(())
}

/// Class logits for each cloud.
pub fn forward(
    clouds: &[SpacetimeCloud],
    weights: &NetworkWeights,
    catalog: &RepCatalog,
    config: &NetworkConfig,
) -> Result<Vec<Vec<f64>>> {
    check_batch(clouds, weights, catalog, config)?;
    config
        .execution
        .map_slice(clouds, |c| forward_cloud(c, weights, catalog, config).map(|p| p.logits))
        .into_iter()
        .collect()
}

/// Activations `V^0 .. V^L` of one cloud.
pub fn forward_activations(
    cloud: &SpacetimeCloud,
    weights: &NetworkWeights,
    catalog: &RepCatalog,
    config: &NetworkConfig,
) -> Result<Vec<Activation>> {
    check_batch(std::slice::from_ref(cloud), weights, catalog, config)?;
    Ok(forward_cloud(cloud, weights, catalog, config)?.activations)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// `−log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}

/// Mean cross-entropy, its gradient and per-cloud logits for a batch.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub loss: f64,
    /// `∂L/∂Re + i ∂L/∂Im` for complex weights.
    pub grads: NetworkWeights,
    pub logits: Vec<Vec<f64>>,
    pub correct: usize,
}

fn backward_cloud(
    pass: &CloudPass,
    label: usize,
    weights: &NetworkWeights,
    catalog: &RepCatalog,
    config: &NetworkConfig,
) -> (f64, NetworkWeights) {
    let mut grads = NetworkWeights::zeros(config, catalog);
    let loss = cross_entropy(&pass.logits, label);
    let mut dlogits = softmax(&pass.logits);
    dlogits[label] -= 1.0;

    let ro = &weights.readout;
    let mut dfeat = vec![0.0; ro.channels];
    for k in 0..ro.classes {
        grads.readout.bias[k] = dlogits[k];
        for c in 0..ro.channels {
            grads.readout.weight[k * ro.channels + c] = dlogits[k] * pass.features[c];
            dfeat[c] += dlogits[k] * ro.weight[k * ro.channels + c];
        }
    }

    let last = pass.activations.last().expect("nonempty");
    let (n, d, g_max) = (last.points, catalog.total_dim(), catalog.degeneracy());
    let r0 = catalog.offset(catalog.trivial);
    let mut gv = Activation::zeros(n, last.channels, d);
    for i in 0..n {
        for c in 0..last.channels {
            let k = gv.index(i, c, r0);
            gv.data[k] = c64(dfeat[c] / n as f64, 0.0);
        }
    }

    let scale = aggregation_scale(config.aggregation, n);
    for (k, layer) in weights.layers.iter().enumerate().rev() {
        let (v, f, cache) = (&pass.activations[k], &pass.filters[k], &pass.caches[k]);
        let (cin, cout) = (layer.in_channels, layer.out_channels);
        let gl = &mut grads.layers[k];
        let mut gv_prev = Activation::zeros(n, cin, d);
        let mut gu = vec![Complex64::ZERO; d * g_max * cin];
        let mut gp = vec![Complex64::ZERO; d * d * cin];
        let mut gf = vec![Complex64::ZERO; d];
        for i in 0..n {
            let ui = &cache.u[i * d * g_max * cin..(i + 1) * d * g_max * cin];
            // Channel mixing.
            gu.fill(Complex64::ZERO);
            for r in 0..d {
                let q = catalog.owner(r);
                for c in 0..cout {
                    let go = gv.get(i, c, r);
                    if go == Complex64::ZERO {
                        continue;
                    }
                    for g in 0..g_max {
                        for dd in 0..cin {
                            let wi = layer.w_index(q, c, g, dd);
                            gl.mixing[wi] += go * ui[(r * g_max + g) * cin + dd].conj();
                            gu[(r * g_max + g) * cin + dd] += go * layer.mixing[wi].conj();
                        }
                    }
                }
            }
            // CG projection.
            gp.fill(Complex64::ZERO);
            for &(g, r, s, t, c) in catalog.cg_entries() {
                let cs = (c * scale).conj();
                for dd in 0..cin {
                    gp[(s * d + t) * cin + dd] += gu[(r * g_max + g) * cin + dd] * cs;
                }
            }
            // Neighbour sum: P[S,T,d] = Σ_j F[i,j,S] V[j,d,T].
            for j in 0..n {
                gf.fill(Complex64::ZERO);
                let fij = &f.data[f.index(i, j, 0)..f.index(i, j, 0) + d];
                for dd in 0..cin {
                    let base = v.index(j, dd, 0);
                    for s in 0..d {
                        for t in 0..d {
                            let g = gp[(s * d + t) * cin + dd];
                            gf[s] += g * v.data[base + t].conj();
                            gv_prev.data[base + t] += g * fij[s].conj();
                        }
                    }
                }
                // Filters: F[i,j,R] = δ ΔX + Σ_g f[q(R), g] Q[i,j,R,g].
                let ij = i * n + j;
                for r in 0..d {
                    if gf[r] == Complex64::ZERO {
                        continue;
                    }
                    let q = catalog.owner(r);
                    for g in 0..g_max {
                        gl.filter[q * g_max + g] += gf[r] * pass.geometry.quad[(ij * d + r) * g_max + g].conj();
                    }
                }
            }
        }
        gv = gv_prev;
    }
    (loss, grads)
}

/// Softmax cross-entropy averaged over the batch and its gradient with
/// respect to every weight.
pub fn backward(
    clouds: &[SpacetimeCloud],
    labels: &[usize],
    weights: &NetworkWeights,
    catalog: &RepCatalog,
    config: &NetworkConfig,
) -> Result<BatchGradient> {
    check_batch(clouds, weights, catalog, config)?;
    if clouds.is_empty() || labels.len() != clouds.len() {
        return Err(Error::domain("backward needs one label per cloud and a nonempty batch"));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= config.num_classes) {
        return Err(Error::domain(format!("label {bad} outside {} classes", config.num_classes)));
    }
    let per_cloud = config
        .execution
        .map(clouds.len(), |b| -> Result<(f64, NetworkWeights, Vec<f64>)> {
            let pass = forward_cloud(&clouds[b], weights, catalog, config)?;
            let (loss, g) = backward_cloud(&pass, labels[b], weights, catalog, config);
            Ok((loss, g, pass.logits))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let inv = 1.0 / clouds.len() as f64;
    let mut grads = NetworkWeights::zeros(config, catalog);
    let mut loss = 0.0;
    let mut logits = Vec::with_capacity(clouds.len());
    let mut correct = 0;
    for ((l, g, z), &label) in per_cloud.into_iter().zip(labels) {
        loss += l * inv;
        grads.add_scaled(&g, inv);
        if argmax(&z) == label {
            correct += 1;
        }
        logits.push(z);
    }
    Ok(BatchGradient {
        loss,
        grads,
        logits,
        correct,
    })
}

/// Mean cross-entropy of a batch.
pub fn batch_loss(
    clouds: &[SpacetimeCloud],
    labels: &[usize],
    weights: &NetworkWeights,
    catalog: &RepCatalog,
    config: &NetworkConfig,
) -> Result<f64> {
    let logits = forward(clouds, weights, catalog, config)?;
    Ok(logits.iter().zip(labels).map(|(z, &l)| cross_entropy(z, l)).sum::<f64>() / clouds.len() as f64)
}
