//! HillSearch: a hidden sum of Gaussian hills on `[0, 10]`, many moderate
//! decoys and one tall, narrow needle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::query::InvalidQuery;
use crate::rng::rng_from_seed;

pub const DOMAIN_LO: f64 = 0.0;
pub const DOMAIN_HI: f64 = 10.0;
pub const NEEDLE_HEIGHT: f64 = 20.0;
/// Decoy heights are drawn uniformly from `1..=DECOY_MAX_HEIGHT`.
pub const DECOY_MAX_HEIGHT: u32 = 5;

/// Contributions with `(x - c)^2 / w` beyond this are below `1e-300` and skipped.
const EXP_CUTOFF: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum HillError {
    #[error("coarse level k must be at least 1")]
    LevelTooSmall,
    #[error("fine level k'={k_prime} must be at least k={k}")]
    FineLevelBelowCoarse { k: u32, k_prime: u32 },
    #[error("fine level k'={0} equals k; the needle would sit on the coarse grid")]
    NeedleOnCoarseGrid(u32),
    #[error("level {0} is too large")]
    LevelTooLarge(u32),
    #[error("parameter `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("instance has no hills")]
    Empty,
    #[error("needle index {0} is out of range")]
    BadNeedle(usize),
    #[error("center, width and height lists differ in length")]
    LengthMismatch,
}

/// `g(x) = height * exp(-(x - center)^2 / width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hill {
    pub center: f64,
    pub width: f64,
    pub height: f64,
}

impl Hill {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let d = x - self.center;
        let z = d * d / self.width;
        if z > EXP_CUTOFF {
            0.0
        } else {
            self.height * (-z).exp()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillGenParams {
    pub k: u32,
    pub k_prime: u32,
    pub j_decoy: f64,
    pub j_needle: f64,
    pub alpha_decoy: f64,
    pub alpha_needle: f64,
    pub seed: u64,
}

impl HillGenParams {
    /// Level pair `(k, k')` with the fixed jitter and width fractions used by
    /// the random suites and difficulty sweeps.
    pub fn with_levels(k: u32, k_prime: u32, seed: u64) -> Self {
        HillGenParams {
            k,
            k_prime,
            j_decoy: 0.1,
            j_needle: 0.2,
            alpha_decoy: 0.01,
            alpha_needle: 0.008,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), HillError> {
        if self.k < 1 {
            return Err(HillError::LevelTooSmall);
        }
        if self.k_prime < self.k {
            return Err(HillError::FineLevelBelowCoarse {
                k: self.k,
                k_prime: self.k_prime,
            });
        }
        if self.k_prime == self.k {
            return Err(HillError::NeedleOnCoarseGrid(self.k));
        }
        if self.k_prime > 30 {
            return Err(HillError::LevelTooLarge(self.k_prime));
        }
        for (name, v) in [
            ("j_decoy", self.j_decoy),
            ("j_needle", self.j_needle),
            ("alpha_decoy", self.alpha_decoy),
            ("alpha_needle", self.alpha_needle),
        ] {
            if !(v > 0.0) {
                return Err(HillError::NonPositive(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillInstance {
    hills: Vec<Hill>,
    /// Index of the needle within `hills`.
    needle: usize,
    /// Odd fine-grid index of the needle base point, when generated.
    needle_grid_index: Option<u64>,
    params: Option<HillGenParams>,
    global_max: f64,
    argmax: f64,
}

impl HillInstance {
    /// Builds an instance from explicit hills and caches its global maximum.
    pub fn from_hills(
        hills: Vec<Hill>,
        needle: usize,
        needle_grid_index: Option<u64>,
        params: Option<HillGenParams>,
    ) -> Result<Self, HillError> {
        if hills.is_empty() {
            return Err(HillError::Empty);
        }
        if needle >= hills.len() {
            return Err(HillError::BadNeedle(needle));
        }
        for h in &hills {
            if !(h.width > 0.0) {
                return Err(HillError::NonPositive("width"));
            }
            if !(h.height > 0.0) {
                return Err(HillError::NonPositive("height"));
            }
        }
        let (argmax, global_max) = maximize(&hills);
        Ok(HillInstance {
            hills,
            needle,
            needle_grid_index,
            params,
            global_max,
            argmax,
        })
    }

    /// Decoys given as parallel lists plus a needle of height 20, stored
    /// after the decoys.
    pub fn from_decoys(
        centers: &[f64],
        widths: &[f64],
        heights: &[f64],
        needle_center: f64,
        needle_width: f64,
    ) -> Result<Self, HillError> {
        if centers.len() != widths.len() || centers.len() != heights.len() {
            return Err(HillError::LengthMismatch);
        }
        let mut hills: Vec<Hill> = centers
            .iter()
            .zip(widths)
            .zip(heights)
            .map(|((&center, &width), &height)| Hill { center, width, height })
            .collect();
        hills.push(Hill {
            center: needle_center,
            width: needle_width,
            height: NEEDLE_HEIGHT,
        });
        let needle = hills.len() - 1;
        HillInstance::from_hills(hills, needle, None, None)
    }

    /// The instance of the main evaluation: seven decoys and a needle at 1.3.
    pub fn evaluated() -> Self {
        HillInstance::from_decoys(
            &[1.33, 2.77, 4.01, 5.31, 6.45, 7.82, 8.95],
            &[0.1, 0.2, 0.1, 0.1, 0.1, 0.2, 0.1],
            &[1.0, 5.0, 2.0, 1.0, 2.0, 3.0, 4.0],
            1.3,
            0.01,
        )
        .expect("evaluated instance is well formed")
    }

    /// Second evaluated instance: seven equal-width decoys and a needle at 6.2.
    pub fn evaluated_extra() -> Self {
        HillInstance::from_decoys(
            &[1.28, 2.65, 3.83, 5.11, 6.44, 7.6, 8.77],
            &[0.1; 7],
            &[1.0, 2.0, 4.0, 1.0, 2.0, 3.0, 4.0],
            6.2,
            0.01,
        )
        .expect("evaluated instance is well formed")
    }

    pub fn hills(&self) -> &[Hill] {
        &self.hills
    }

    pub fn needle(&self) -> &Hill {
        &self.hills[self.needle]
    }

    pub fn needle_index(&self) -> usize {
        self.needle
    }

    pub fn needle_grid_index(&self) -> Option<u64> {
        self.needle_grid_index
    }

    pub fn params(&self) -> Option<&HillGenParams> {
        self.params.as_ref()
    }

    pub fn global_max(&self) -> f64 {
        self.global_max
    }

    pub fn argmax(&self) -> f64 {
        self.argmax
    }

    /// Unchecked evaluation of `f` at any real `x`.
    pub fn value_at(&self, x: f64) -> f64 {
        sum_hills(&self.hills, x)
    }

    /// Oracle: `f(x)` for `x` in the domain, otherwise an invalid query.
    pub fn eval_f(&self, x: f64) -> Result<f64, InvalidQuery> {
        if !(DOMAIN_LO..=DOMAIN_HI).contains(&x) {
            return Err(InvalidQuery::OutOfDomain(format!("{x}")));
        }
        Ok(self.value_at(x))
    }
}

fn sum_hills(hills: &[Hill], x: f64) -> f64 {
    hills.iter().map(|h| h.eval(x)).sum()
}

/// Draws a fresh instance. Random stream order: for each interior coarse
/// index `m` ascending, the decoy jitter then its height; then the needle's
/// odd fine index and its jitter.
pub fn generate_hill(params: &HillGenParams) -> Result<HillInstance, HillError> {
    params.validate()?;
    let mut rng = rng_from_seed(params.seed);
    let coarse = 1u64 << params.k;
    let fine = 1u64 << params.k_prime;
    let delta_k = (DOMAIN_HI - DOMAIN_LO) / coarse as f64;
    let delta_fine = (DOMAIN_HI - DOMAIN_LO) / fine as f64;

    let mut hills = Vec::with_capacity(coarse as usize);
    let jd = params.j_decoy * delta_k;
    for m in 1..coarse {
        let x_m = DOMAIN_LO + m as f64 * delta_k;
        let eps: f64 = rng.gen_range(-jd..=jd);
        let height = rng.gen_range(1..=DECOY_MAX_HEIGHT);
        hills.push(Hill {
            center: x_m + eps,
            width: params.alpha_decoy * delta_k,
            height: f64::from(height),
        });
    }

    // odd fine indices 1, 3, ..., 2^{k'} - 1
    let odd = rng.gen_range(0..fine / 2) * 2 + 1;
    assert!(
        odd % (fine / coarse) != 0,
        "needle base point must lie off the coarse grid"
    );
    let x_star = DOMAIN_LO + odd as f64 * delta_fine;
    let jn = params.j_needle * delta_fine;
    let eps: f64 = rng.gen_range(-jn..=jn);
    hills.push(Hill {
        center: x_star + eps,
        width: params.alpha_needle * delta_fine,
        height: NEEDLE_HEIGHT,
    });
    let needle = hills.len() - 1;
    HillInstance::from_hills(hills, needle, Some(odd), Some(*params))
}

/// Global maximum of `f` over the domain: a uniform grid with spacing
/// `min_width / 20`, then golden-section refinement of the best few grid
/// maxima down to an interval below `1e-12`.
fn maximize(hills: &[Hill]) -> (f64, f64) {
    let min_width = hills.iter().map(|h| h.width).fold(f64::INFINITY, f64::min);
    let span = DOMAIN_HI - DOMAIN_LO;
    let cells = (span / (min_width / 20.0)).ceil().max(1.0) as usize;
    let h = span / cells as f64;
    let grid = |i: usize| {
        if i == cells {
            DOMAIN_HI
        } else {
            DOMAIN_LO + i as f64 * h
        }
    };
    let values: Vec<f64> = (0..=cells).map(|i| sum_hills(hills, grid(i))).collect();

    // local maxima of the sampled curve, best first
    let mut peaks: Vec<usize> = (0..=cells)
        .filter(|&i| {
            let left = i == 0 || values[i - 1] <= values[i];
            let right = i == cells || values[i + 1] <= values[i];
            left && right
        })
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    peaks.truncate(3);

    let mut best = (grid(peaks[0]), values[peaks[0]]);
    for &i in &peaks {
        let lo = grid(i.saturating_sub(1));
        let hi = grid((i + 1).min(cells));
        let x = golden_section_max(|x| sum_hills(hills, x), lo, hi, 1e-12);
        let fx = sum_hills(hills, x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        // guards against stalling once the bracket hits float resolution
        if c >= d {
            break;
        }
    }
    let mid = 0.5 * (a + b);
    [a, b, mid]
        .into_iter()
        .max_by(|x, y| f(*x).total_cmp(&f(*y)))
        .unwrap_or(mid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(center: f64, width: f64, height: f64) -> HillInstance {
        HillInstance::from_hills(vec![Hill { center, width, height }], 0, None, None).unwrap()
    }

    #[test]
    fn hill_peaks_at_center() {
        let inst = single(5.0, 0.1, 3.0);
        assert_eq!(inst.eval_f(5.0).unwrap(), 3.0);
        assert!((inst.global_max() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_domain_is_invalid() {
        let inst = single(5.0, 0.1, 3.0);
        assert!(inst.eval_f(-0.001).is_err());
        assert!(inst.eval_f(10.0001).is_err());
        assert!(inst.eval_f(f64::NAN).is_err());
        assert!(inst.eval_f(0.0).is_ok());
        assert!(inst.eval_f(10.0).is_ok());
    }

    #[test]
    fn counts_follow_levels() {
        let inst = generate_hill(&HillGenParams::with_levels(3, 4, 11)).unwrap();
        assert_eq!(inst.hills().len(), 8);
        let inst = generate_hill(&HillGenParams::with_levels(1, 3, 11)).unwrap();
        assert_eq!(inst.hills().len(), 2);
        assert_eq!(inst.needle().height, NEEDLE_HEIGHT);
    }

    #[test]
    fn decoys_stay_near_their_grid_points() {
        for seed in 0..50 {
            let p = HillGenParams::with_levels(3, 5, seed);
            let inst = generate_hill(&p).unwrap();
            let dk = 10.0 / 8.0;
            for (i, h) in inst.hills().iter().enumerate() {
                if i == inst.needle_index() {
                    let odd = inst.needle_grid_index().unwrap();
                    assert_eq!(odd % 2, 1);
                    let base = odd as f64 * 10.0 / 32.0;
                    assert!((h.center - base).abs() <= p.j_needle * 10.0 / 32.0 + 1e-12);
                    continue;
                }
                let m = (i + 1) as f64;
                assert!((h.center - m * dk).abs() <= p.j_decoy * dk + 1e-12);
                assert!((1.0..=5.0).contains(&h.height) && h.height.fract() == 0.0);
                assert!((h.width - p.alpha_decoy * dk).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(generate_hill(&HillGenParams::with_levels(0, 2, 0)).is_err());
        assert!(generate_hill(&HillGenParams::with_levels(3, 2, 0)).is_err());
        assert!(generate_hill(&HillGenParams::with_levels(3, 3, 0)).is_err());
        let mut p = HillGenParams::with_levels(2, 3, 0);
        p.alpha_needle = 0.0;
        assert_eq!(generate_hill(&p), Err(HillError::NonPositive("alpha_needle")));
    }

    #[test]
    fn two_far_identical_hills() {
        let hills = vec![
            Hill {
                center: 2.0,
                width: 0.05,
                height: 4.0,
            },
            Hill {
                center: 8.0,
                width: 0.05,
                height: 4.0,
            },
        ];
        let inst = HillInstance::from_hills(hills, 0, None, None).unwrap();
        assert!((inst.global_max() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_hills() {
        let p = HillGenParams::with_levels(4, 6, 99);
        assert_eq!(generate_hill(&p).unwrap(), generate_hill(&p).unwrap());
    }
}
