//! Vector-matrix factored voxel grids and the radiance field built on them.
//!
//! A [`FactoredTensor3`] over modes `(0, 1, 2)` (radius, polar, azimuth for
//! spherical grids) is the sum over `n < rank` of
//!
//! ```text
//! V0_n ⊗ M12_n  +  V1_n ⊗ M02_n  +  V2_n ⊗ M01_n
//! ```
//!
//! Interpolating this tensor trilinearly is the same as linearly
//! interpolating each vector and bilinearly interpolating each matrix, so the
//! dense grid is never materialized. Mode 2 may be periodic.
//!
//! Storage is rank-interleaved: vector `m` is laid out `[node][rank]` and
//! matrix `m` is `[a][b][rank]` over the axis pair [`MATRIX_AXES`]`[m]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::SceneConfig;
use crate::decoder::Mlp;
use crate::encode::FeatureEncoder;
use crate::error::{Error, Result};
use crate::geom::GridLayout;
use crate::real::Real;

/// Axes spanned by matrix `m`; the paired vector runs along axis `m`.
pub const MATRIX_AXES: [(usize, usize); 3] = [(1, 2), (0, 2), (0, 1)];

/// Continuous grid coordinates in `[0, 1]³`.
///
/// For spherical grids these are `(ρ, θ/π, (φ + π)/2π)`; for cubic grids the
/// normalized `(x, y, z)` inside the bounding cube.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridQuery {
    coords: [f64; 3],
}

impl GridQuery {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { coords: [a, b, c] }
    }

    pub fn coords(&self) -> [f64; 3] {
        self.coords
    }

    pub fn rho(&self) -> f64 {
        self.coords[0]
    }

    pub fn theta_norm(&self) -> f64 {
        self.coords[1]
    }

    pub fn phi_norm(&self) -> f64 {
        self.coords[2]
    }
}

/// Interpolation footprint of a query: lower and upper node per axis and the
/// weight of the upper node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil<T> {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    pub frac: [T; 3],
}

#[inline]
fn axis_stencil(q: f64, n: usize, periodic: bool) -> (usize, usize, f64) {
    if periodic {
        let x = q.rem_euclid(1.0) * n as f64;
        let fl = x.floor();
        let mut i0 = fl as usize;
        if i0 >= n {
            i0 = 0;
        }
        (i0, (i0 + 1) % n, x - fl)
    } else {
        let x = q.clamp(0.0, 1.0) * (n - 1) as f64;
        let i0 = (x.floor() as usize).min(n - 2);
        (i0, i0 + 1, x - i0 as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactoredTensor3<T> {
    resolution: [usize; 3],
    rank: usize,
    wrap_last: bool,
    vectors: [Vec<T>; 3],
    matrices: [Vec<T>; 3],
}

impl<T: Real> FactoredTensor3<T> {
    pub fn zeros(resolution: [usize; 3], rank: usize, wrap_last: bool) -> Self {
        let vectors = std::array::from_fn(|m| vec![T::zero(); resolution[m] * rank]);
        let matrices = std::array::from_fn(|m| {
            let (a, b) = MATRIX_AXES[m];
            vec![T::zero(); resolution[a] * resolution[b] * rank]
        });
        Self {
            resolution,
            rank,
            wrap_last,
            vectors,
            matrices,
        }
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn wraps_last_axis(&self) -> bool {
        self.wrap_last
    }

    pub fn vectors(&self) -> &[Vec<T>; 3] {
        &self.vectors
    }

    pub fn matrices(&self) -> &[Vec<T>; 3] {
        &self.matrices
    }

    #[inline]
    fn matrix_index(&self, m: usize, n: usize, a: usize, b: usize) -> usize {
        let (_, bx) = MATRIX_AXES[m];
        (a * self.resolution[bx] + b) * self.rank + n
    }

    /// Entry `i` of vector `n` along axis `m`.
    pub fn vector(&self, m: usize, n: usize, i: usize) -> T {
        self.vectors[m][i * self.rank + n]
    }

    pub fn set_vector(&mut self, m: usize, n: usize, i: usize, value: T) {
        let r = self.rank;
        self.vectors[m][i * r + n] = value;
    }

    /// Entry `(a, b)` of matrix `n` paired with axis `m`.
    pub fn matrix(&self, m: usize, n: usize, a: usize, b: usize) -> T {
        self.matrices[m][self.matrix_index(m, n, a, b)]
    }

    pub fn set_matrix(&mut self, m: usize, n: usize, a: usize, b: usize, value: T) {
        let idx = self.matrix_index(m, n, a, b);
        self.matrices[m][idx] = value;
    }

    /// The six factor arrays: three vectors then three matrices.
    pub fn slices(&self) -> impl Iterator<Item = &[T]> {
        self.vectors.iter().chain(self.matrices.iter()).map(|v| v.as_slice())
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.vectors
            .iter_mut()
            .chain(self.matrices.iter_mut())
            .map(|v| v.as_mut_slice())
    }

    pub fn param_count(&self) -> usize {
        self.slices().map(|s| s.len()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.resolution == other.resolution && self.rank == other.rank
    }

    /// Materializes the full `R×Θ×Φ` tensor, row-major.
    pub fn densify(&self) -> Vec<T> {
        let [r0, r1, r2] = self.resolution;
        let mut out = vec![T::zero(); r0 * r1 * r2];
        for i in 0..r0 {
            for j in 0..r1 {
                for k in 0..r2 {
                    let mut v = T::zero();
                    for n in 0..self.rank {
                        v += self.vector(0, n, i) * self.matrix(0, n, j, k)
                            + self.vector(1, n, j) * self.matrix(1, n, i, k)
                            + self.vector(2, n, k) * self.matrix(2, n, i, j);
                    }
                    out[(i * r1 + j) * r2 + k] = v;
                }
            }
        }
        out
    }

    pub fn stencil(&self, q: &GridQuery) -> Stencil<T> {
        let c = q.coords();
        let mut st = Stencil {
            lo: [0; 3],
            hi: [0; 3],
            frac: [T::zero(); 3],
        };
        for axis in 0..3 {
            let periodic = axis == 2 && self.wrap_last;
            let (lo, hi, f) = axis_stencil(c[axis], self.resolution[axis], periodic);
            st.lo[axis] = lo;
            st.hi[axis] = hi;
            st.frac[axis] = T::cast(f);
        }
        st
    }

    /// Interpolated factor values at a stencil: `vec_out[m·N + n]` is the
    /// linearly interpolated vector `n` of axis `m` and `mat_out[m·N + n]`
    /// the bilinearly interpolated paired matrix.
    pub fn factor_values(&self, st: &Stencil<T>, vec_out: &mut [T], mat_out: &mut [T]) {
        let nr = self.rank;
        let one = T::one();
        for m in 0..3 {
            let f = st.frac[m];
            let v = &self.vectors[m];
            let v0 = &v[st.lo[m] * nr..(st.lo[m] + 1) * nr];
            let v1 = &v[st.hi[m] * nr..(st.hi[m] + 1) * nr];
            for ((o, &a), &b) in vec_out[m * nr..(m + 1) * nr].iter_mut().zip(v0).zip(v1) {
                *o = a + (b - a) * f;
            }

            let (ax, bx) = MATRIX_AXES[m];
            let (fa, fb) = (st.frac[ax], st.frac[bx]);
            let stride = self.resolution[bx];
            let mat = &self.matrices[m];
            let row = |a: usize, b: usize| {
                let s = (a * stride + b) * nr;
                &mat[s..s + nr]
            };
            let c00 = row(st.lo[ax], st.lo[bx]);
            let c01 = row(st.lo[ax], st.hi[bx]);
            let c10 = row(st.hi[ax], st.lo[bx]);
            let c11 = row(st.hi[ax], st.hi[bx]);
            let (w00, w01, w10, w11) = ((one - fa) * (one - fb), (one - fa) * fb, fa * (one - fb), fa * fb);
            for (n, o) in mat_out[m * nr..(m + 1) * nr].iter_mut().enumerate() {
                *o = c00[n] * w00 + c01[n] * w01 + c10[n] * w10 + c11[n] * w11;
            }
        }
    }

    /// Trilinear interpolation of the represented tensor.
    pub fn interp(&self, q: &GridQuery) -> T {
        let st = self.stencil(q);
        let mut vv = vec![T::zero(); 3 * self.rank];
        let mut mv = vec![T::zero(); 3 * self.rank];
        self.factor_values(&st, &mut vv, &mut mv);
        vv.iter().zip(&mv).map(|(&a, &b)| a * b).sum()
    }

    /// Accumulates into `grads` the gradient of `Σ upstream[m·N+n] · s_{m,n}`
    /// where `s_{m,n} = vec_vals[m·N+n] · mat_vals[m·N+n]` are the component
    /// scalars at this stencil.
    pub fn accumulate_grad(&self, st: &Stencil<T>, vec_vals: &[T], mat_vals: &[T], upstream: &[T], grads: &mut Self) {
        let nr = self.rank;
        let one = T::one();
        for m in 0..3 {
            let up = &upstream[m * nr..(m + 1) * nr];
            let vv = &vec_vals[m * nr..(m + 1) * nr];
            let mv = &mat_vals[m * nr..(m + 1) * nr];
            let f = st.frac[m];
            let gvec = &mut grads.vectors[m];
            let (lo, hi) = (st.lo[m] * nr, st.hi[m] * nr);
            for n in 0..nr {
                let g = up[n] * mv[n];
                gvec[lo + n] += g * (one - f);
                gvec[hi + n] += g * f;
            }

            let (ax, bx) = MATRIX_AXES[m];
            let (fa, fb) = (st.frac[ax], st.frac[bx]);
            let stride = self.resolution[bx];
            let gmat = &mut grads.matrices[m];
            let corners = [
                (st.lo[ax], st.lo[bx], (one - fa) * (one - fb)),
                (st.lo[ax], st.hi[bx], (one - fa) * fb),
                (st.hi[ax], st.lo[bx], fa * (one - fb)),
                (st.hi[ax], st.hi[bx], fa * fb),
            ];
            for (a, b, w) in corners {
                let s = (a * stride + b) * nr;
                for n in 0..nr {
                    gmat[s + n] += w * up[n] * vv[n];
                }
            }
        }
    }
}

/// All trainable parameters of a field. The same type doubles as the
/// gradient store and as optimizer moment storage.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldParams<T> {
    pub density: FactoredTensor3<T>,
    pub appearance: FactoredTensor3<T>,
    /// Appearance mixing vectors, `[3·N_c][F]`; row `3n + m` mixes the
    /// appearance component of rank `n` along axis `m`.
    pub basis: Vec<T>,
    pub decoder: Mlp<T>,
}

impl<T: Real> FieldParams<T> {
    pub fn zeros(config: &SceneConfig) -> Self {
        let wrap = config.voxelization == crate::config::Voxelization::Spherical;
        let enc = FeatureEncoder::<T>::new(&config.encoding, config.features);
        Self {
            density: FactoredTensor3::zeros(config.resolution, config.rank_density, wrap),
            appearance: FactoredTensor3::zeros(config.resolution, config.rank_appearance, wrap),
            basis: vec![T::zero(); 3 * config.rank_appearance * config.features],
            decoder: Mlp::zeros(enc.output_len(), &config.hidden),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub fn fill_zero(&mut self) {
        for s in self.slices_mut() {
            s.fill(T::zero());
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Parameter arrays in checkpoint order: density vectors, density
    /// matrices, appearance vectors, appearance matrices, basis, decoder
    /// (weight then bias per layer).
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = self.density.slices().collect();
        out.extend(self.appearance.slices());
        out.push(&self.basis);
        out.extend(self.decoder.slices());
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = self.density.slices_mut().collect();
        out.extend(self.appearance.slices_mut());
        out.push(&mut self.basis);
        out.extend(self.decoder.slices_mut());
        out
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        let a = self.slices();
        let b = other.slices();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Counts of factor arrays in the closed form `3Nσ + 3Nc` matrices and
/// `3Nσ + 6Nc` vectors, the latter including the `3Nc` mixing vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamInventory {
    pub matrices: usize,
    pub vectors: usize,
    pub basis_vectors: usize,
    pub decoder_scalars: usize,
    pub total_scalars: usize,
}

/// Reusable buffers for interpolation on the hot path.
#[derive(Clone, Debug, Default)]
pub struct InterpScratch<T> {
    pub density_vec: Vec<T>,
    pub density_mat: Vec<T>,
    pub app_vec: Vec<T>,
    pub app_mat: Vec<T>,
    pub upstream: Vec<T>,
}

impl<T: Real> InterpScratch<T> {
    pub fn for_field(field: &RadianceField<T>) -> Self {
        let nd = 3 * field.params.density.rank();
        let na = 3 * field.params.appearance.rank();
        Self {
            density_vec: vec![T::zero(); nd],
            density_mat: vec![T::zero(); nd],
            app_vec: vec![T::zero(); na],
            app_mat: vec![T::zero(); na],
            upstream: vec![T::zero(); nd.max(na)],
        }
    }
}

/// Density grid, appearance grid, mixing vectors and decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct RadianceField<T> {
    config: SceneConfig,
    layout: GridLayout,
    encoder: FeatureEncoder<T>,
    pub params: FieldParams<T>,
}

impl<T: Real> RadianceField<T> {
    /// Wraps parameters whose shapes must match `config`.
    pub fn new(config: SceneConfig, params: FieldParams<T>) -> Result<Self> {
        config.validate()?;
        let expect = FieldParams::<T>::zeros(&config);
        if !expect.same_shape(&params)
            || !expect.density.same_shape(&params.density)
            || !expect.appearance.same_shape(&params.appearance)
        {
            return Err(Error::Input("field parameters do not match the scene config".into()));
        }
        let layout = GridLayout {
            bounds: config.bounds(),
            voxelization: config.voxelization,
            warp: config.warp,
        };
        let encoder = FeatureEncoder::new(&config.encoding, config.features);
        Ok(Self {
            config,
            layout,
            encoder,
            params,
        })
    }

    /// Random initialization, deterministic in `seed`.
    ///
    /// Factor entries are drawn from `N(0, s²)` with `s = init_scale` or
    /// `0.1/sqrt(rank)`; mixing vectors and decoder weights are uniform in
    /// `±1/sqrt(fan_in)`.
    pub fn init(config: SceneConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = FieldParams::<T>::zeros(&config);
        for tensor in [&mut params.density, &mut params.appearance] {
            let scale = config.init_scale.unwrap_or(0.1 / (tensor.rank() as f64).sqrt());
            if scale > 0.0 {
                let normal = Normal::new(0.0, scale).expect("finite scale");
                for s in tensor.slices_mut() {
                    for v in s {
                        *v = T::cast(normal.sample(&mut rng));
                    }
                }
            }
        }
        let bound = 1.0 / ((3 * config.rank_appearance) as f64).sqrt();
        for v in &mut params.basis {
            *v = T::cast(rand::Rng::random_range(&mut rng, -bound..bound));
        }
        let enc = FeatureEncoder::<T>::new(&config.encoding, config.features);
        params.decoder = Mlp::init(enc.output_len(), &config.hidden, &mut rng);
        Self::new(config, params)
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn encoder(&self) -> &FeatureEncoder<T> {
        &self.encoder
    }

    pub fn features(&self) -> usize {
        self.config.features
    }

    pub fn inventory(&self) -> ParamInventory {
        let (ns, nc) = (self.config.rank_density, self.config.rank_appearance);
        ParamInventory {
            matrices: 3 * ns + 3 * nc,
            vectors: 3 * ns + 6 * nc,
            basis_vectors: 3 * nc,
            decoder_scalars: self.params.decoder.param_count(),
            total_scalars: self.params.len(),
        }
    }

    /// Pre-activation density feature.
    pub fn interp_density(&self, q: &GridQuery) -> T {
        self.params.density.interp(q)
    }

    /// Appearance feature vector of length `F`.
    pub fn interp_appearance(&self, q: &GridQuery) -> Vec<T> {
        let mut scratch = InterpScratch::for_field(self);
        let st = self.params.appearance.stencil(q);
        let mut out = vec![T::zero(); self.features()];
        self.appearance_at(&st, &mut scratch, &mut out);
        out
    }

    /// Density at a precomputed stencil; fills the density scratch.
    #[inline]
    pub fn density_at(&self, st: &Stencil<T>, scratch: &mut InterpScratch<T>) -> T {
        self.params
            .density
            .factor_values(st, &mut scratch.density_vec, &mut scratch.density_mat);
        scratch
            .density_vec
            .iter()
            .zip(&scratch.density_mat)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    /// Appearance features at a precomputed stencil; fills the appearance scratch.
    #[inline]
    pub fn appearance_at(&self, st: &Stencil<T>, scratch: &mut InterpScratch<T>, out: &mut [T]) {
        let nc = self.params.appearance.rank();
        let f = self.features();
        self.params
            .appearance
            .factor_values(st, &mut scratch.app_vec, &mut scratch.app_mat);
        out.fill(T::zero());
        for n in 0..nc {
            for m in 0..3 {
                let s = scratch.app_vec[m * nc + n] * scratch.app_mat[m * nc + n];
                let row = &self.params.basis[(3 * n + m) * f..(3 * n + m + 1) * f];
                for (o, &b) in out.iter_mut().zip(row) {
                    *o += s * b;
                }
            }
        }
    }

    /// Gradient of `upstream · density(q)`, accumulated into `grads`.
    pub fn interp_density_backward(&self, q: &GridQuery, upstream: T, grads: &mut FieldParams<T>) {
        if upstream == T::zero() {
            return;
        }
        let mut scratch = InterpScratch::for_field(self);
        let st = self.params.density.stencil(q);
        self.density_at(&st, &mut scratch);
        self.density_backward_at(&st, &mut scratch, upstream, grads);
    }

    /// Backward at a stencil whose density scratch is already filled.
    #[inline]
    pub fn density_backward_at(
        &self,
        st: &Stencil<T>,
        scratch: &mut InterpScratch<T>,
        upstream: T,
        grads: &mut FieldParams<T>,
    ) {
        let nd = 3 * self.params.density.rank();
        scratch.upstream[..nd].fill(upstream);
        self.params.density.accumulate_grad(
            st,
            &scratch.density_vec,
            &scratch.density_mat,
            &scratch.upstream[..nd],
            &mut grads.density,
        );
    }

    /// Gradient of `upstream · appearance(q)` w.r.t. appearance factors and
    /// mixing vectors, accumulated into `grads`.
    pub fn interp_appearance_backward(&self, q: &GridQuery, upstream: &[T], grads: &mut FieldParams<T>) {
        let mut scratch = InterpScratch::for_field(self);
        let st = self.params.appearance.stencil(q);
        let mut tmp = vec![T::zero(); self.features()];
        self.appearance_at(&st, &mut scratch, &mut tmp);
        self.appearance_backward_at(&st, &mut scratch, upstream, grads);
    }

    /// Backward at a stencil whose appearance scratch is already filled.
    pub fn appearance_backward_at(
        &self,
        st: &Stencil<T>,
        scratch: &mut InterpScratch<T>,
        upstream: &[T],
        grads: &mut FieldParams<T>,
    ) {
        if upstream.iter().all(|&u| u == T::zero()) {
            return;
        }
        let nc = self.params.appearance.rank();
        let f = self.features();
        for n in 0..nc {
            for m in 0..3 {
                let i = m * nc + n;
                let s = scratch.app_vec[i] * scratch.app_mat[i];
                let c = 3 * n + m;
                let row = &self.params.basis[c * f..(c + 1) * f];
                let grow = &mut grads.basis[c * f..(c + 1) * f];
                let mut ds = T::zero();
                for k in 0..f {
                    grow[k] += s * upstream[k];
                    ds += row[k] * upstream[k];
                }
                scratch.upstream[i] = ds;
            }
        }
        self.params.appearance.accumulate_grad(
            st,
            &scratch.app_vec,
            &scratch.app_mat,
            &scratch.upstream[..3 * nc],
            &mut grads.appearance,
        );
    }
}

/// Free-function form of [`RadianceField::init`].
pub fn init_field<T: Real>(config: SceneConfig, seed: u64) -> Result<RadianceField<T>> {
    RadianceField::init(config, seed)
}
