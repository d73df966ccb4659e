//! Contraction of the chain with its conjugate through the reduction
//! operators, sample by sample.
//!
//! A left environment at bond `k` is an operator on `(q, c)` where `q` runs
//! over the output legs of sites `< k` and `c` over the bond. A right
//! environment at bond `k` is the map from a bond operator to the output
//! operator of sites `>= k`, stored as `R[c, c', p, p']`. At the right end the
//! left environment is the output density itself.

use super::encoding::EncodedState;
use super::htn::HtnModel;
use crate::error::{HtnError, Result};
use crate::tn::{ComplexTensor, DensityMatrix, C64, ONE, ZERO};

/// `v_r[(o, c), a] = sum_s W[a, s, r, o, c] phi[s]` for every reduction index.
#[derive(Clone, Debug)]
pub(crate) struct KetMaps {
    pub xi: usize,
    /// `o * chi_r`
    pub rows: usize,
    /// `chi_l`
    pub cols: usize,
    pub data: Vec<C64>,
}

impl KetMaps {
    pub fn block(&self, r: usize) -> &[C64] {
        let n = self.rows * self.cols;
        &self.data[r * n..(r + 1) * n]
    }
}

pub(crate) fn ket_maps(site: &ComplexTensor, phi: &[C64; 2]) -> KetMaps {
    let [l, _, xi, o, c] = [site.dims()[0], site.dims()[1], site.dims()[2], site.dims()[3], site.dims()[4]];
    let rows = o * c;
    let w = site.data();
    let mut data = vec![ZERO; xi * rows * l];
    for a in 0..l {
        for (s, &p) in phi.iter().enumerate() {
            if p == ZERO {
                continue;
            }
            let base = (a * 2 + s) * xi * rows;
            for r in 0..xi {
                let src = &w[base + r * rows..base + (r + 1) * rows];
                let dst = &mut data[r * rows * l..];
                for (i, &x) in src.iter().enumerate() {
                    dst[i * l + a] += x * p;
                }
            }
        }
    }
    KetMaps { xi, rows, cols: l, data }
}

/// Square operator on `(q, c)` with `q` slow.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Env {
    pub q: usize,
    pub c: usize,
    pub data: Vec<C64>,
}

impl Env {
    pub fn start() -> Self {
        Env { q: 1, c: 1, data: vec![ONE] }
    }

    pub fn dim(&self) -> usize {
        self.q * self.c
    }

    /// Copies block `(qa, qb)` into `out` (`c x c`).
    fn block_into(&self, qa: usize, qb: usize, out: &mut [C64]) {
        let n = self.dim();
        let c = self.c;
        for i in 0..c {
            let row = (qa * c + i) * n + qb * c;
            out[i * c..(i + 1) * c].copy_from_slice(&self.data[row..row + c]);
        }
    }

    /// Moves the output leg of the last transfer from the bond index into the
    /// `q` index: `(q, (o, c))` becomes `((q, o), c)`. The flat layout is the
    /// same, only the bookkeeping changes.
    pub fn absorb_output(mut self, o: usize) -> Self {
        debug_assert_eq!(self.c % o, 0);
        self.q *= o;
        self.c /= o;
        self
    }

    /// `tr_q` of the operator: a `c x c` matrix.
    pub fn bond_marginal(&self) -> Vec<C64> {
        let c = self.c;
        let n = self.dim();
        let mut out = vec![ZERO; c * c];
        for q in 0..self.q {
            for i in 0..c {
                for j in 0..c {
                    out[i * c + j] += self.data[(q * c + i) * n + q * c + j];
                }
            }
        }
        out
    }
}

/// `R[c, c', p, p']` for the sites from some bond to the right end.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct RightEnv {
    pub c: usize,
    pub p: usize,
    pub data: Vec<C64>,
}

impl RightEnv {
    pub fn end() -> Self {
        RightEnv { c: 1, p: 1, data: vec![ONE] }
    }
}

// out (m x l) = v (m x k) * e (k x l)
fn mm(v: &[C64], e: &[C64], m: usize, k: usize, l: usize, out: &mut [C64]) {
    out[..m * l].fill(ZERO);
    for i in 0..m {
        let orow = &mut out[i * l..(i + 1) * l];
        for p in 0..k {
            let x = v[i * k + p];
            if x == ZERO {
                continue;
            }
            for (o, y) in orow.iter_mut().zip(&e[p * l..(p + 1) * l]) {
                *o += x * y;
            }
        }
    }
}

/// `E' = sum_r D_r (I_q (x) v_r) E (I_q (x) v_r)^dagger`. Only the upper
/// triangle is computed; Hermiticity fills in the rest.
pub(crate) fn transfer(env: &Env, maps: &KetMaps, d: &[f64]) -> Env {
    let (m, l, q) = (maps.rows, maps.cols, env.q);
    debug_assert_eq!(env.c, l);
    let n_new = q * m;
    let mut out = vec![ZERO; n_new * n_new];
    let mut blk = vec![ZERO; l * l];
    let mut t = vec![ZERO; m * l];
    for qa in 0..q {
        for qb in qa..q {
            env.block_into(qa, qb, &mut blk);
            for (r, &dr) in d.iter().enumerate() {
                if dr == 0.0 {
                    continue;
                }
                let v = maps.block(r);
                mm(v, &blk, m, l, l, &mut t);
                for i in 0..m {
                    let orow = (qa * m + i) * n_new + qb * m;
                    let trow = &t[i * l..(i + 1) * l];
                    let j0 = if qa == qb { i } else { 0 };
                    for j in j0..m {
                        let acc: C64 = trow.iter().zip(&v[j * l..(j + 1) * l]).map(|(x, y)| x * y.conj()).sum();
                        out[orow + j] += acc * dr;
                    }
                }
            }
        }
    }
    for a in 0..n_new {
        out[a * n_new + a].im = 0.0;
        for b in (a + 1)..n_new {
            out[b * n_new + a] = out[a * n_new + b].conj();
        }
    }
    Env { q, c: m, data: out }
}

/// Left transfer through site `k` including the output bookkeeping.
pub(crate) fn transfer_site(env: &Env, maps: &KetMaps, d: &[f64], o: usize) -> Env {
    transfer(env, maps, d).absorb_output(o)
}

/// Adjoint of `transfer`: `H = sum_r D_r (I (x) v_r)^dagger H' (I (x) v_r)`.
/// `h_out` lives on the `(q, (o, c))` space of the transfer output.
pub(crate) fn transfer_adjoint(h_out: &[C64], q: usize, maps: &KetMaps, d: &[f64]) -> Vec<C64> {
    let (m, l) = (maps.rows, maps.cols);
    let n_out = q * m;
    let n_in = q * l;
    let mut h = vec![ZERO; n_in * n_in];
    let mut blk = vec![ZERO; m * m];
    let mut t = vec![ZERO; m * l];
    for qa in 0..q {
        for qb in 0..q {
            for i in 0..m {
                let src = (qa * m + i) * n_out + qb * m;
                blk[i * m..(i + 1) * m].copy_from_slice(&h_out[src..src + m]);
            }
            for (r, &dr) in d.iter().enumerate() {
                if dr == 0.0 {
                    continue;
                }
                let v = maps.block(r);
                // t = H'_blk v  (m x l)
                mm(&blk, v, m, m, l, &mut t);
                // h_blk += dr v^dagger t
                for a in 0..l {
                    let hrow = (qa * l + a) * n_in + qb * l;
                    for b in 0..l {
                        let mut acc = ZERO;
                        for i in 0..m {
                            acc += v[i * l + a].conj() * t[i * l + b];
                        }
                        h[hrow + b] += acc * dr;
                    }
                }
            }
        }
    }
    h
}

/// Gradient pieces of `tr(H' E')` at one site:
/// `dv[r] = D_r G_r = d/d conj(v_r)` and `dd[r] = d/d D_r` where
/// `G_r = sum_{a,b} H'_{ab} v_r E_{ba}`.
pub(crate) fn site_gradient(
    env: &Env,
    h_out: &[C64],
    maps: &KetMaps,
    d: &[f64],
    dv: &mut [C64],
    dd: &mut [f64],
) {
    let (m, l, q) = (maps.rows, maps.cols, env.q);
    let n_out = q * m;
    let mut eblk = vec![ZERO; l * l];
    let mut hblk = vec![ZERO; m * m];
    let mut t = vec![ZERO; m * l];
    let mut g = vec![ZERO; m * l];
    let mut gsum = vec![ZERO; maps.xi * m * l];
    for qa in 0..q {
        for qb in 0..q {
            env.block_into(qb, qa, &mut eblk);
            for i in 0..m {
                let src = (qa * m + i) * n_out + qb * m;
                hblk[i * m..(i + 1) * m].copy_from_slice(&h_out[src..src + m]);
            }
            for r in 0..maps.xi {
                let v = maps.block(r);
                mm(v, &eblk, m, l, l, &mut t);
                mm(&hblk, &t, m, m, l, &mut g);
                let dst = &mut gsum[r * m * l..(r + 1) * m * l];
                for (x, y) in dst.iter_mut().zip(&g) {
                    *x += y;
                }
            }
        }
    }
    for r in 0..maps.xi {
        let v = maps.block(r);
        let gr = &gsum[r * m * l..(r + 1) * m * l];
        let mut acc = 0.0;
        for (x, y) in gr.iter().zip(v) {
            acc += (x * y.conj()).re;
        }
        dd[r] += acc;
        let dst = &mut dv[r * m * l..(r + 1) * m * l];
        for (x, y) in dst.iter_mut().zip(gr) {
            *x += y * d[r];
        }
    }
}

/// Folds `d/d conj(v)` back onto the site tensor: adds
/// `conj(phi[s]) dv[r][(o, c), a]` to `gw[a, s, r, o, c]`.
pub(crate) fn accumulate_site_grad(dv: &[C64], maps: &KetMaps, phi: &[C64; 2], gw: &mut [C64]) {
    let (xi, m, l) = (maps.xi, maps.rows, maps.cols);
    for a in 0..l {
        for (s, p) in phi.iter().enumerate() {
            let pc = p.conj();
            if pc == ZERO {
                continue;
            }
            let base = (a * 2 + s) * xi * m;
            for r in 0..xi {
                let src = &dv[r * m * l..];
                let dst = &mut gw[base + r * m..base + (r + 1) * m];
                for (i, x) in dst.iter_mut().enumerate() {
                    *x += src[i * l + a] * pc;
                }
            }
        }
    }
}

/// Right environment through one site:
/// `R_k[a, a', (o, p), (o', p')] = sum_r D_r sum_{c, c'} v_r[(o,c),a] conj(v_r[(o',c'),a']) R_{k+1}[c, c', p, p']`.
pub(crate) fn transfer_right(renv: &RightEnv, maps: &KetMaps, d: &[f64], o: usize) -> RightEnv {
    let (m, l) = (maps.rows, maps.cols);
    let c = renv.c;
    let p = renv.p;
    debug_assert_eq!(m, o * c);
    let pp = p * p;
    let np = o * p;
    // z[c, (o', a'), p, p'] = sum_c' conj(v[(o',c'), a']) R[c, c', p, p']
    let mut z = vec![ZERO; c * o * l * pp];
    let mut out = vec![ZERO; l * l * np * np];
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        let v = maps.block(r);
        z.fill(ZERO);
        for ci in 0..c {
            for ob in 0..o {
                for ab in 0..l {
                    let zrow = &mut z[((ci * o + ob) * l + ab) * pp..][..pp];
                    for cb in 0..c {
                        let x = v[(ob * c + cb) * l + ab].conj();
                        if x == ZERO {
                            continue;
                        }
                        let rrow = &renv.data[(ci * c + cb) * pp..][..pp];
                        for (zz, rr) in zrow.iter_mut().zip(rrow) {
                            *zz += x * rr;
                        }
                    }
                }
            }
        }
        for a in 0..l {
            for oa in 0..o {
                for ci in 0..c {
                    let x = v[(oa * c + ci) * l + a] * dr;
                    if x == ZERO {
                        continue;
                    }
                    for ab in 0..l {
                        for ob in 0..o {
                            let zrow = &z[((ci * o + ob) * l + ab) * pp..][..pp];
                            for pa in 0..p {
                                let dst = ((a * l + ab) * np + oa * p + pa) * np + ob * p;
                                for pb in 0..p {
                                    out[dst + pb] += x * zrow[pa * p + pb];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    RightEnv { c: l, p: np, data: out }
}

/// `rho[(q, p), (q', p')] = sum_{c, c'} E[(q, c), (q', c')] R[c, c', p, p']`.
pub(crate) fn close(env: &Env, renv: &RightEnv) -> Vec<C64> {
    let (q, c, p) = (env.q, env.c, renv.p);
    debug_assert_eq!(c, renv.c);
    let n = q * c;
    let d = q * p;
    let pp = p * p;
    let mut rho = vec![ZERO; d * d];
    for qa in 0..q {
        for qb in 0..q {
            for ca in 0..c {
                for cb in 0..c {
                    let e = env.data[(qa * c + ca) * n + qb * c + cb];
                    if e == ZERO {
                        continue;
                    }
                    let rr = &renv.data[(ca * c + cb) * pp..][..pp];
                    for pa in 0..p {
                        let dst = (qa * p + pa) * d + qb * p;
                        for pb in 0..p {
                            rho[dst + pb] += e * rr[pa * p + pb];
                        }
                    }
                }
            }
        }
    }
    rho
}

/// Adjoint of `close` in its first argument:
/// `H[(q', c'), (q, c)] = sum_{p, p'} Gamma[(q', p'), (q, p)] R[c, c', p, p']`.
pub(crate) fn close_adjoint(gamma: &[C64], q: usize, renv: &RightEnv) -> Vec<C64> {
    let (c, p) = (renv.c, renv.p);
    let n = q * c;
    let d = q * p;
    let pp = p * p;
    let mut h = vec![ZERO; n * n];
    for qb in 0..q {
        for qa in 0..q {
            for cb in 0..c {
                for ca in 0..c {
                    let rr = &renv.data[(ca * c + cb) * pp..][..pp];
                    let mut acc = ZERO;
                    for pa in 0..p {
                        for pb in 0..p {
                            acc += gamma[(qb * p + pb) * d + qa * p + pa] * rr[pa * p + pb];
                        }
                    }
                    h[(qb * c + cb) * n + qa * c + ca] = acc;
                }
            }
        }
    }
    h
}

pub(crate) fn check_sites(model: &HtnModel, sigma: &EncodedState) -> Result<()> {
    if sigma.n_sites() != model.n_sites() {
        return Err(HtnError::shape(format!(
            "encoded state has {} sites, model has {}",
            sigma.n_sites(),
            model.n_sites()
        )));
    }
    Ok(())
}

/// Left environments `E_0 ..= E_n` for one sample; `E_n` is the output density.
pub(crate) fn left_envs(model: &HtnModel, sigma: &EncodedState) -> Vec<Env> {
    let arch = model.architecture();
    let mut envs = Vec::with_capacity(model.n_sites() + 1);
    envs.push(Env::start());
    for k in 0..model.n_sites() {
        let maps = ket_maps(&model.sites()[k], &sigma.site_vectors[k]);
        let next = transfer_site(envs.last().unwrap(), &maps, model.reduction()[k].diag(), arch.output_dims[k]);
        envs.push(next);
    }
    envs
}

/// Unnormalized output density as a flat row-major matrix.
pub(crate) fn forward_raw(model: &HtnModel, sigma: &EncodedState) -> Vec<C64> {
    let arch = model.architecture();
    let mut env = Env::start();
    for k in 0..model.n_sites() {
        let maps = ket_maps(&model.sites()[k], &sigma.site_vectors[k]);
        env = transfer_site(&env, &maps, model.reduction()[k].diag(), arch.output_dims[k]);
    }
    env.data
}

/// The post-selected channel output `tr_B(U sigma U^dagger (D_B (x) I))` on
/// the output legs, earlier sites most significant.
pub fn forward(model: &HtnModel, sigma: &EncodedState) -> Result<DensityMatrix> {
    check_sites(model, sigma)?;
    let mut data = forward_raw(model, sigma);
    let d = model.output_dim();
    hermitize(&mut data, d);
    DensityMatrix::from_unchecked(d, data)
}

/// Replaces `a` by `(a + a^dagger) / 2` in place.
pub(crate) fn hermitize(a: &mut [C64], d: usize) {
    for i in 0..d {
        a[i * d + i].im = 0.0;
        for j in (i + 1)..d {
            let avg = (a[i * d + j] + a[j * d + i].conj()) * 0.5;
            a[i * d + j] = avg;
            a[j * d + i] = avg.conj();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::encoding::encode_rotational;
    use crate::model::htn::{Architecture, HtnModel, ReductionOperator};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_setup(seed: u64, outs: Vec<usize>, classes: usize) -> (HtnModel, EncodedState) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = outs.len();
        let arch = Architecture::new(3, 3, outs, classes).unwrap();
        let model = HtnModel::random_with_reduction(arch, &mut rng).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        (model, encode_rotational(&x, 0).unwrap())
    }

    #[test]
    fn identity_reduction_preserves_trace() {
        for seed in 0..10 {
            let (model, sigma) = random_setup(seed, vec![1, 2, 2], 4);
            let rho = forward(&model.with_identity_reduction(), &sigma).unwrap();
            assert!((rho.trace() - 1.0).abs() < 1e-12);
            rho.validate().unwrap();
        }
    }

    #[test]
    fn single_site_projector_by_hand() {
        // W maps (s) -> (r, o) with r the copied qubit, D = diag(1, 0)
        let arch = Architecture::new(1, 2, vec![1], 1).unwrap();
        let w = ComplexTensor::from_real(&[1, 2, 2, 1, 1], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let d = ReductionOperator::new(vec![1.0, 0.0]).unwrap();
        let model = HtnModel::new(arch, vec![w], vec![d]).unwrap();
        let (a, b) = (0.6, 0.8);
        let sigma = EncodedState { site_vectors: vec![[C64::new(a, 0.0), C64::new(b, 0.0)]], ancilla_count: 0 };
        let rho = forward(&model, &sigma).unwrap();
        assert_eq!(rho.dim(), 1);
        assert!((rho.trace() - a * a).abs() < 1e-15);
    }

    #[test]
    fn right_environments_close_to_the_same_density() {
        let (model, sigma) = random_setup(7, vec![1, 2, 1, 2], 4);
        let arch = model.architecture().clone();
        let envs = left_envs(&model, &sigma);
        let rho = envs.last().unwrap().data.clone();
        let mut renv = RightEnv::end();
        for k in (0..model.n_sites()).rev() {
            let maps = ket_maps(&model.sites()[k], &sigma.site_vectors[k]);
            renv = transfer_right(&renv, &maps, model.reduction()[k].diag(), arch.output_dims[k]);
            let closed = close(&envs[k], &renv);
            let err = closed.iter().zip(&rho).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(err < 1e-13, "bond {k}: {err}");
        }
    }

    #[test]
    fn site_count_mismatch_is_a_shape_error() {
        let (model, _) = random_setup(1, vec![1, 2], 2);
        let sigma = encode_rotational(&[0.1], 0).unwrap();
        assert!(matches!(forward(&model, &sigma), Err(HtnError::Shape(_))));
    }
}
