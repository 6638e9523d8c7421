//! SFAR fields and their noisy observations on an `N x N` torus.
//!
//! With periodic boundaries the precision matrix is block circulant, so the
//! 2D DFT diagonalises it exactly. Sampling draws independent Gaussians per
//! frequency, scales them by the covariance eigenvalues and transforms back.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::fft::Fft2;
use crate::gmrf::SfarParams;

/// Largest side accepted by [`dense_covariances`].
pub const DENSE_MAX_SIDE: usize = 8;

const SIGNAL_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const TILTED_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Signal,
    Noise,
    Observation,
}

impl FieldKind {
    fn code(self) -> u8 {
        match self {
            FieldKind::Signal => 0,
            FieldKind::Noise => 1,
            FieldKind::Observation => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FieldKind::Signal),
            1 => Some(FieldKind::Noise),
            2 => Some(FieldKind::Observation),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::Signal => "signal",
            FieldKind::Noise => "noise",
            FieldKind::Observation => "observation",
        }
    }
}

impl std::str::FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signal" => Ok(FieldKind::Signal),
            "noise" => Ok(FieldKind::Noise),
            "observation" => Ok(FieldKind::Observation),
            other => Err(Error::Format(format!("unknown field kind `{other}`"))),
        }
    }
}

/// `H0`: noise only. `H1`: hidden SFAR field plus noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

/// Real-valued `N x N` lattice sample, row-major (`values[i * N + j]`).
#[derive(Debug, Clone, PartialEq)]
pub struct TorusField {
    side: usize,
    values: Vec<f64>,
    kind: FieldKind,
    seed: u64,
    params: SfarParams,
}

impl TorusField {
    pub fn new(side: usize, values: Vec<f64>, kind: FieldKind, seed: u64, params: SfarParams) -> Result<Self> {
        if side < 2 {
            return Err(usage("side", format!("lattice side must be at least 2, got {side}")));
        }
        if values.len() != side * side {
            return Err(usage(
                "values",
                format!("expected {} entries for side {side}, got {}", side * side, values.len()),
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite entry at index {pos}")));
        }
        Ok(Self {
            side,
            values,
            kind,
            seed,
            params,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &SfarParams {
        &self.params
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i % self.side) * self.side + j % self.side]
    }

    fn header(&self) -> String {
        format!(
            "# torus-field side={} kind={} seed={} kappa={} zeta={} sigma2={}",
            self.side,
            self.kind.as_str(),
            self.seed,
            self.params.kappa(),
            self.params.zeta(),
            self.params.sigma2()
        )
    }

    /// One header comment line, then `N` comma-separated rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.header())?;
        for row in self.values.chunks(self.side) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty input".into()))??;
        let rest = header
            .strip_prefix("# torus-field ")
            .ok_or_else(|| Error::Format("missing `# torus-field` header".into()))?;
        let mut side = None;
        let mut kind = None;
        let mut seed = None;
        let (mut kappa, mut zeta, mut sigma2) = (None, None, None);
        for item in rest.split_whitespace() {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header item `{item}`")))?;
            let bad = |_| Error::Format(format!("bad value for `{key}`: `{value}`"));
            match key {
                "side" => side = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "kind" => kind = Some(value.parse::<FieldKind>()?),
                "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
                "kappa" => kappa = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "zeta" => zeta = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "sigma2" => sigma2 = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                _ => return Err(Error::Format(format!("unknown header key `{key}`"))),
            }
        }
        let missing = |k: &str| Error::Format(format!("header lacks `{k}`"));
        let side = side.ok_or_else(|| missing("side"))?;
        let params = SfarParams::new(
            kappa.ok_or_else(|| missing("kappa"))?,
            zeta.ok_or_else(|| missing("zeta"))?,
            sigma2.ok_or_else(|| missing("sigma2"))?,
        )?;
        let mut values = Vec::with_capacity(side * side);
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = values.len();
            for cell in line.split(',') {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("row {row}: bad number `{cell}`")))?;
                values.push(v);
            }
            if values.len() - before != side {
                return Err(Error::Format(format!("row {row} has {} entries, expected {side}", values.len() - before)));
            }
        }
        Self::new(
            side,
            values,
            kind.ok_or_else(|| missing("kind"))?,
            seed.ok_or_else(|| missing("seed"))?,
            params,
        )
    }

    /// Little-endian binary layout:
    ///
    /// ```text
    /// magic "TFLD" | version u16 (=1) | kind u8 | reserved u8 | side u32 | seed u64
    /// | kappa f64 | zeta f64 | sigma2 f64 | side*side f64 values, row-major
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(44 + 8 * self.values.len());
        out.extend_from_slice(b"TFLD");
        out.extend_from_slice(&1u16.to_le_bytes());
        out.push(self.kind.code());
        out.push(0);
        out.extend_from_slice(&(self.side as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for p in [self.params.kappa(), self.params.zeta(), self.params.sigma2()] {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const HEADER: usize = 44;
        if bytes.len() < HEADER || &bytes[..4] != b"TFLD" {
            return Err(Error::Format("missing TFLD header".into()));
        }
        let u16_at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u16_at(4);
        if version != 1 {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let kind = FieldKind::from_code(bytes[6]).ok_or_else(|| Error::Format(format!("bad kind code {}", bytes[6])))?;
        let side = u32_at(8) as usize;
        let seed = u64_at(12);
        let params = SfarParams::new(f64_at(20), f64_at(28), f64_at(36))?;
        let expected = HEADER + 8 * side * side;
        if bytes.len() != expected {
            return Err(Error::Format(format!("expected {expected} bytes, got {}", bytes.len())));
        }
        let values = (0..side * side).map(|i| f64_at(HEADER + 8 * i)).collect();
        Self::new(side, values, kind, seed, params)
    }
}

/// Eigenvalues `kappa (1 - 2 zeta cos(2 pi k/N) - 2 zeta cos(2 pi l/N))` of the
/// torus precision matrix, indexed `[k * N + l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPrecisionSpectrum {
    side: usize,
    eigenvalues: Vec<f64>,
}

impl TorusPrecisionSpectrum {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.eigenvalues[k * self.side + l]
    }

    /// True when some eigenvalue is zero (`zeta = 1/4`, the constant mode).
    pub fn is_singular(&self) -> bool {
        self.eigenvalues.iter().any(|&v| v <= 0.0)
    }

    /// Signal covariance eigenvalues `1 / Lambda_kl` (`+inf` at a zero eigenvalue).
    pub fn covariance_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|&v| if v > 0.0 { 1.0 / v } else { f64::INFINITY })
            .collect()
    }

    /// Exact torus autocovariance of the signal at lag `(di, dj)`.
    pub fn autocovariance(&self, di: usize, dj: usize) -> f64 {
        let n = self.side;
        let mut acc = crate::numeric::CompensatedSum::new();
        for k in 0..n {
            for l in 0..n {
                let phase = 2.0 * PI * ((k * di + l * dj) % n) as f64 / n as f64;
                acc.add(phase.cos() / self.get(k, l));
            }
        }
        acc.value() / (n * n) as f64
    }

    /// Marginal signal variance on the torus (mean of the covariance eigenvalues).
    pub fn marginal_variance(&self) -> f64 {
        self.autocovariance(0, 0)
    }
}

fn check_side(side: usize) -> Result<()> {
    if side < 2 {
        return Err(usage("side", format!("lattice side must be at least 2, got {side}")));
    }
    Ok(())
}

pub fn torus_precision_spectrum(params: &SfarParams, side: usize) -> Result<TorusPrecisionSpectrum> {
    check_side(side)?;
    let cosines: Vec<f64> = (0..side).map(|k| (2.0 * PI * k as f64 / side as f64).cos()).collect();
    let two_zeta = 2.0 * params.zeta();
    let mut eigenvalues = Vec::with_capacity(side * side);
    for ck in &cosines {
        for cl in &cosines {
            eigenvalues.push(params.kappa() * (1.0 - two_zeta * (ck + cl)));
        }
    }
    Ok(TorusPrecisionSpectrum { side, eigenvalues })
}

/// Dense `N^2 x N^2` precision matrix with the SFAR stencil under periodic wraparound.
pub fn torus_precision_matrix(params: &SfarParams, side: usize) -> Result<DMatrix<f64>> {
    check_side(side)?;
    let n = side;
    let mut q = DMatrix::zeros(n * n, n * n);
    let lambda = params.lambda();
    for i in 0..n {
        for j in 0..n {
            let s = i * n + j;
            q[(s, s)] += params.kappa();
            for (ni, nj) in [(i + 1, j), (i + n - 1, j), (i, j + 1), (i, j + n - 1)] {
                q[(s, (ni % n) * n + nj % n)] -= lambda;
            }
        }
    }
    Ok(q)
}

/// `(Sigma0, Sigma1) = (sigma2 I, sigma2 I + Q^{-1})` for tiny lattices.
pub fn dense_covariances(params: &SfarParams, side: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if side > DENSE_MAX_SIDE {
        return Err(usage(
            "side",
            format!("dense covariances are limited to side <= {DENSE_MAX_SIDE}, got {side}"),
        ));
    }
    if torus_precision_spectrum(params, side)?.is_singular() {
        return Err(Error::SingularPrecision);
    }
    let q = torus_precision_matrix(params, side)?;
    let dim = side * side;
    let cov = q.cholesky().ok_or(Error::SingularPrecision)?.inverse();
    let sigma0 = DMatrix::identity(dim, dim) * params.sigma2();
    let mut sigma1 = &sigma0 + cov;
    // symmetrise rounding
    let t = sigma1.transpose();
    sigma1 = (&sigma1 + t) * 0.5;
    Ok((sigma0, sigma1))
}

/// A real field synthesised from covariance eigenvalues, with the largest
/// imaginary part left over by the inverse transform.
#[derive(Debug, Clone)]
pub struct SpectralSample {
    pub values: Vec<f64>,
    pub imaginary_residue: f64,
}

/// Draws a zero-mean real stationary Gaussian field on the torus whose
/// covariance operator has eigenvalues `cov_eigs[k * N + l]`.
///
/// Each conjugate pair of frequencies shares one complex normal draw (variance
/// split evenly between real and imaginary parts); self-conjugate frequencies,
/// where `2k = 2l = 0 mod N`, get a single real draw.
pub fn synthesize<R: Rng + ?Sized>(cov_eigs: &[f64], fft: &Fft2, rng: &mut R) -> SpectralSample {
    let n = fft.side();
    assert_eq!(cov_eigs.len(), n * n);
    let mut spec = vec![Complex64::default(); n * n];
    for k in 0..n {
        for l in 0..n {
            let idx = k * n + l;
            let partner = ((n - k) % n) * n + (n - l) % n;
            if partner < idx {
                continue;
            }
            let c = cov_eigs[idx];
            if partner == idx {
                let g: f64 = rng.sample(StandardNormal);
                spec[idx] = Complex64::new(c.sqrt() * g, 0.0);
            } else {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                let z = Complex64::new(a, b) * (0.5 * c).sqrt();
                spec[idx] = z;
                spec[partner] = z.conj();
            }
        }
    }
    fft.inverse(&mut spec);
    let imaginary_residue = spec.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    SpectralSample {
        values: spec.into_iter().map(|z| z.re).collect(),
        imaginary_residue,
    }
}

/// ChaCha stream `stream` of the generator keyed by `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `index` within experiment `domain` of a run keyed by `seed`.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(domain)) ^ index)
}

/// Reusable sampler for one `(params, N)` pair.
#[derive(Debug, Clone)]
pub struct TorusSampler {
    params: SfarParams,
    fft: Fft2,
    covariance: Vec<f64>,
    singular: bool,
}

impl TorusSampler {
    /// Errors with [`Error::SingularPrecision`] at `zeta = 1/4`.
    pub fn new(params: SfarParams, side: usize) -> Result<Self> {
        let spectrum = torus_precision_spectrum(&params, side)?;
        if spectrum.is_singular() {
            return Err(Error::SingularPrecision);
        }
        Ok(Self::from_spectrum(params, &spectrum))
    }

    /// Accepts `zeta = 1/4` and pins every infinite-variance mode to zero.
    pub fn projected(params: SfarParams, side: usize) -> Result<Self> {
        let spectrum = torus_precision_spectrum(&params, side)?;
        Ok(Self::from_spectrum(params, &spectrum))
    }

    fn from_spectrum(params: SfarParams, spectrum: &TorusPrecisionSpectrum) -> Self {
        let singular = spectrum.is_singular();
        let covariance = spectrum
            .covariance_eigenvalues()
            .into_iter()
            .map(|c| if c.is_finite() { c } else { 0.0 })
            .collect();
        Self {
            params,
            fft: Fft2::new(spectrum.side()),
            covariance,
            singular,
        }
    }

    pub fn side(&self) -> usize {
        self.fft.side()
    }

    pub fn params(&self) -> &SfarParams {
        &self.params
    }

    /// Whether the zero mode was projected out.
    pub fn is_projected(&self) -> bool {
        self.singular
    }

    fn signal_values(&self, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, SIGNAL_STREAM);
        let sample = synthesize(&self.covariance, &self.fft, &mut rng);
        debug_assert!(sample.imaginary_residue <= 1e-10 * (1.0 + sample.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))));
        sample.values
    }

    fn noise_values(&self, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, NOISE_STREAM);
        let sd = self.params.sigma2().sqrt();
        (0..self.side() * self.side())
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn signal(&self, seed: u64) -> TorusField {
        self.field(self.signal_values(seed), FieldKind::Signal, seed)
    }

    pub fn noise(&self, seed: u64) -> TorusField {
        self.field(self.noise_values(seed), FieldKind::Noise, seed)
    }

    pub fn observation(&self, hypothesis: Hypothesis, seed: u64) -> TorusField {
        let mut values = self.noise_values(seed);
        if hypothesis == Hypothesis::H1 {
            for (y, x) in values.iter_mut().zip(self.signal_values(seed)) {
                *y += x;
            }
        }
        self.field(values, FieldKind::Observation, seed)
    }

    /// Observation drawn from a Gaussian whose covariance eigenvalues are given
    /// directly (used by the tilted miss-probability estimator).
    pub(crate) fn with_covariance(&self, cov_eigs: &[f64], seed: u64) -> TorusField {
        let mut rng = stream_rng(seed, TILTED_STREAM);
        let sample = synthesize(cov_eigs, &self.fft, &mut rng);
        self.field(sample.values, FieldKind::Observation, seed)
    }

    fn field(&self, values: Vec<f64>, kind: FieldKind, seed: u64) -> TorusField {
        TorusField {
            side: self.side(),
            values,
            kind,
            seed,
            params: self.params,
        }
    }
}

/// Zero-mean SFAR field on the torus; errors at `zeta = 1/4`.
pub fn sample_signal(params: &SfarParams, side: usize, seed: u64) -> Result<TorusField> {
    Ok(TorusSampler::new(*params, side)?.signal(seed))
}

/// SFAR field with any infinite-variance (zero-precision) mode set to zero.
pub fn sample_signal_projected(params: &SfarParams, side: usize, seed: u64) -> Result<TorusField> {
    Ok(TorusSampler::projected(*params, side)?.signal(seed))
}

/// Observation under `hypothesis`. Signal and noise come from separate
/// ChaCha streams of the same seed, so the H1 signal component equals
/// `sample_signal(params, side, seed)`.
pub fn sample_observation(params: &SfarParams, side: usize, hypothesis: Hypothesis, seed: u64) -> Result<TorusField> {
    match hypothesis {
        Hypothesis::H0 => Ok(TorusSampler::projected(*params, side)?.observation(Hypothesis::H0, seed)),
        Hypothesis::H1 => Ok(TorusSampler::new(*params, side)?.observation(Hypothesis::H1, seed)),
    }
}
