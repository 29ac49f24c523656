//! Diagnostics over feature streams and quality metrics over endpoint sets.
//!
//! The feature-side tools (adjacent cosine similarity, 2-component PCA)
//! visualize how a trajectory moves through feature space. The image-side
//! tools rasterize endpoint clouds onto a 64x64 density grid and score grids
//! against each other with PSNR and SSIM, standing in for image metrics when
//! the "images" are point clouds.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::trajectory::Trajectory;

/// Cosine similarity between consecutive features, length S - 1.
pub fn cosine_curve(traj: &Trajectory) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(traj.steps() - 1);
    for s in 0..traj.steps() - 1 {
        let a = traj.feature(s);
        let b = traj.feature(s + 1);
        let (na, nb) = (a.norm(), b.norm());
        if na <= 1e-300 || nb <= 1e-300 {
            return Err(Error::Validation(format!(
                "zero-norm feature at step {}",
                if na <= 1e-300 { s } else { s + 1 }
            )));
        }
        out.push(a.dot(b)? / (na * nb));
    }
    Ok(out)
}

/// Result of projecting a trajectory onto its top two principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// Per-step coordinates in the two-component basis.
    pub points: Vec<[f64; 2]>,
    /// Variance captured by each component.
    pub eigenvalues: [f64; 2],
    /// Total feature variance (trace of the covariance).
    pub total_variance: f64,
}

/// Applies the centered covariance to `v` without materializing the matrix.
fn cov_apply(centered: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let n = centered.len() as f64;
    let mut out = vec![0.0; v.len()];
    for row in centered {
        let proj: f64 = row.iter().zip(v).map(|(r, x)| r * x).sum();
        for (o, r) in out.iter_mut().zip(row) {
            *o += proj * r / n;
        }
    }
    out
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        for (x, y) in v.iter_mut().zip(b) {
            *x -= proj * y;
        }
    }
}

/// Flips `v` so its first component above noise level is positive.
fn fix_sign(v: &mut [f64]) {
    if let Some(&lead) = v.iter().find(|x| x.abs() > 1e-12) {
        if lead < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

fn power_iterate(
    centered: &[Vec<f64>],
    basis: &[Vec<f64>],
    dim: usize,
    scale: f64,
) -> (f64, Vec<f64>) {
    let mut rng = SeededRng::new(0x50_43_41);
    let mut v = rng.normal_vec(dim);
    orthogonalize(&mut v, basis);
    if normalize(&mut v) <= 1e-12 {
        // No orthogonal direction left in this dimension count.
        return (0.0, vec![0.0; dim]);
    }
    for _ in 0..1000 {
        let mut next = cov_apply(centered, &v);
        orthogonalize(&mut next, basis);
        let norm = normalize(&mut next);
        if norm <= 1e-14 * scale {
            // The deflated subspace carries no variance. After the
            // projection subtraction cancels, what remains is rounding
            // noise with no usable direction, so keep the current unit
            // vector as the orthonormal completion.
            return (0.0, v);
        }
        // Second pass: the subtraction above loses orthogonality exactly
        // when the deflated component dominates the remaining variance.
        orthogonalize(&mut next, basis);
        normalize(&mut next);
        let delta: f64 = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let flipped: f64 = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a + b) * (a + b))
            .sum::<f64>()
            .sqrt();
        v = next;
        if delta.min(flipped) < 1e-9 {
            break;
        }
    }
    let cv = cov_apply(centered, &v);
    let lambda: f64 = cv.iter().zip(&v).map(|(a, b)| a * b).sum();
    (lambda.max(0.0), v)
}

/// Projects the feature stream onto its top two principal components, found
/// by power iteration with deflation.
pub fn pca_project(traj: &Trajectory) -> Result<PcaProjection> {
    let steps = traj.steps();
    if steps < 3 {
        return Err(Error::Validation(format!(
            "pca needs at least 3 steps, got {steps}"
        )));
    }
    let dim = traj.feature_dim();
    let mut mean = vec![0.0; dim];
    for s in 0..steps {
        for (m, x) in mean.iter_mut().zip(traj.feature(s).as_slice()) {
            *m += x / steps as f64;
        }
    }
    let centered: Vec<Vec<f64>> = (0..steps)
        .map(|s| {
            traj.feature(s)
                .as_slice()
                .iter()
                .zip(&mean)
                .map(|(x, m)| x - m)
                .collect()
        })
        .collect();
    let total_variance: f64 = centered
        .iter()
        .map(|row| row.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        / steps as f64;
    if total_variance <= 1e-300 {
        return Err(Error::Validation("features carry no variance to project".into()));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(2);
    let mut eigenvalues = [0.0; 2];
    for eigenvalue in eigenvalues.iter_mut() {
        let (lambda, mut v) = power_iterate(&centered, &basis, dim, total_variance);
        fix_sign(&mut v);
        *eigenvalue = lambda;
        basis.push(v);
    }
    let points = centered
        .iter()
        .map(|row| {
            [
                row.iter().zip(&basis[0]).map(|(x, b)| x * b).sum(),
                row.iter().zip(&basis[1]).map(|(x, b)| x * b).sum(),
            ]
        })
        .collect();
    Ok(PcaProjection {
        points,
        eigenvalues,
        total_variance,
    })
}

/// Cells per side of the endpoint raster.
pub const RASTER_SIZE: usize = 64;
/// Half-extent of the rastered square, so the grid covers [-6, 6)^2.
pub const RASTER_EXTENT: f64 = 6.0;

/// Histograms the first two coordinates of each point onto a square grid
/// over `[-extent, extent)` per axis (half-open cells, out-of-range points
/// dropped), normalized by the maximum cell count. All-zero output means no
/// point landed inside.
pub fn rasterize(points: &[Vec<f64>], extent: f64) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::Validation("rasterize needs at least one point".into()));
    }
    if !(extent.is_finite() && extent > 0.0) {
        return Err(Error::Validation(format!("raster extent {extent} must be positive")));
    }
    let mut counts = vec![0u64; RASTER_SIZE * RASTER_SIZE];
    let width = 2.0 * extent / RASTER_SIZE as f64;
    for p in points {
        if p.len() < 2 {
            return Err(Error::Validation(
                "rasterize needs points with at least two coordinates".into(),
            ));
        }
        let (x, y) = (p[0], p[1]);
        if !(x.is_finite() && y.is_finite()) {
            continue;
        }
        let i = ((x + extent) / width).floor();
        let j = ((y + extent) / width).floor();
        if i < 0.0 || j < 0.0 || i >= RASTER_SIZE as f64 || j >= RASTER_SIZE as f64 {
            continue;
        }
        counts[i as usize * RASTER_SIZE + j as usize] += 1;
    }
    let max = *counts.iter().max().expect("non-empty grid");
    if max == 0 {
        return Ok(vec![0.0; RASTER_SIZE * RASTER_SIZE]);
    }
    Ok(counts.iter().map(|&c| c as f64 / max as f64).collect())
}

fn grid_side(a: &[f64], b: &[f64]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            place: "metric grids",
            expected: a.len(),
            got: b.len(),
        });
    }
    let side = (a.len() as f64).sqrt().round() as usize;
    if side * side != a.len() || side == 0 {
        return Err(Error::Validation(format!(
            "metric grids must be square, got {} cells",
            a.len()
        )));
    }
    Ok(side)
}

/// Peak signal-to-noise ratio in dB with unit dynamic range, capped at
/// 100 dB for matching grids.
pub fn psnr(a: &[f64], b: &[f64]) -> Result<f64> {
    grid_side(a, b)?;
    let mse: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse < 1e-10 {
        return Ok(100.0);
    }
    Ok(-10.0 * mse.log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Mean structural similarity over all fully interior 11x11 Gaussian
/// windows (sigma 1.5, C1 = 0.01^2, C2 = 0.03^2, weighted covariances
/// without sample correction).
pub fn ssim(a: &[f64], b: &[f64]) -> Result<f64> {
    let side = grid_side(a, b)?;
    if side < SSIM_WINDOW {
        return Err(Error::Validation(format!(
            "ssim needs grids of at least {SSIM_WINDOW} cells per side, got {side}"
        )));
    }
    let k = ssim_kernel();
    let half = SSIM_WINDOW / 2;
    const C1: f64 = 0.01 * 0.01;
    const C2: f64 = 0.03 * 0.03;
    let mut acc = 0.0;
    let mut windows = 0usize;
    for ci in half..side - half {
        for cj in half..side - half {
            let (mut ma, mut mb) = (0.0, 0.0);
            for di in 0..SSIM_WINDOW {
                let row = (ci + di - half) * side + cj - half;
                for dj in 0..SSIM_WINDOW {
                    let w = k[di] * k[dj];
                    ma += w * a[row + dj];
                    mb += w * b[row + dj];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for di in 0..SSIM_WINDOW {
                let row = (ci + di - half) * side + cj - half;
                for dj in 0..SSIM_WINDOW {
                    let w = k[di] * k[dj];
                    let da = a[row + dj] - ma;
                    let db = b[row + dj] - mb;
                    va += w * da * da;
                    vb += w * db * db;
                    cov += w * da * db;
                }
            }
            acc += ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
                / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            windows += 1;
        }
    }
    Ok(acc / windows as f64)
}

/// `|a - reference| / |reference|` over full state vectors.
pub fn endpoint_rel_err(a: &[f64], reference: &[f64]) -> Result<f64> {
    if a.len() != reference.len() {
        return Err(Error::DimMismatch {
            place: "endpoint",
            expected: reference.len(),
            got: a.len(),
        });
    }
    let rnorm: f64 = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rnorm <= 1e-300 {
        return Err(Error::Validation("reference endpoint has zero norm".into()));
    }
    let d: f64 = a
        .iter()
        .zip(reference)
        .map(|(x, r)| (x - r) * (x - r))
        .sum::<f64>()
        .sqrt();
    Ok(d / rnorm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{synth_trajectory, SynthParams};
    use crate::trajectory::{Schedule, Trajectory};
    use approx::assert_relative_eq;

    fn traj_from_features(features: Vec<Vec<f64>>) -> Trajectory {
        let sched = Schedule::new(features.len()).unwrap();
        let states = features.clone();
        Trajectory::new(sched.timesteps(), features, states, 0, "test").unwrap()
    }

    #[test]
    fn cosine_curve_constants_and_alternation() {
        let t = traj_from_features(vec![vec![1.0, 2.0]; 5]);
        assert!(cosine_curve(&t).unwrap().iter().all(|&c| (c - 1.0).abs() < 1e-12));
        let t = traj_from_features(vec![
            vec![1.0, 2.0],
            vec![-1.0, -2.0],
            vec![1.0, 2.0],
            vec![-1.0, -2.0],
        ]);
        assert!(cosine_curve(&t).unwrap().iter().all(|&c| (c + 1.0).abs() < 1e-12));
        let t = traj_from_features(vec![vec![1.0], vec![0.0], vec![1.0]]);
        assert!(cosine_curve(&t).is_err());
    }

    #[test]
    fn cosine_curve_stays_in_range() {
        let traj = synth_trajectory(&SynthParams::default(), 3).unwrap();
        for c in cosine_curve(&traj).unwrap() {
            assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        }
    }

    #[test]
    fn synth_middle_stage_is_smoothest_on_the_curve() {
        let p = SynthParams::default();
        let (mut s1, mut s2) = (0.0, 0.0);
        let (mut n1, mut n2) = (0, 0);
        for seed in 0..20 {
            let curve = cosine_curve(&synth_trajectory(&p, seed).unwrap()).unwrap();
            for (s, c) in curve.iter().enumerate() {
                if s + 1 < p.b1 {
                    s1 += c;
                    n1 += 1;
                } else if s >= p.b1 && s + 1 < p.b2 {
                    s2 += c;
                    n2 += 1;
                }
            }
        }
        assert!(
            s2 / n2 as f64 > s1 / n1 as f64,
            "stage means {} vs {}",
            s1 / n1 as f64,
            s2 / n2 as f64
        );
    }

    #[test]
    fn pca_rank_one_data_has_flat_second_coordinate() {
        let u = [3.0, -1.0, 2.0];
        let features: Vec<Vec<f64>> = (0..40)
            .map(|s| u.iter().map(|x| x * s as f64).collect())
            .collect();
        let p = pca_project(&traj_from_features(features)).unwrap();
        for pt in &p.points {
            assert!(pt[1].abs() < 1e-9, "second coordinate {}", pt[1]);
        }
        assert!(p.eigenvalues[1] < 1e-9 * p.eigenvalues[0]);
        // Captured variance accounts for everything.
        assert_relative_eq!(
            p.eigenvalues[0] + p.eigenvalues[1],
            p.total_variance,
            max_relative = 1e-9
        );
    }

    #[test]
    fn pca_isotropic_split_is_balanced() {
        let mut rng = SeededRng::new(12);
        let features: Vec<Vec<f64>> = (0..500).map(|_| rng.normal_vec(2)).collect();
        let p = pca_project(&traj_from_features(features)).unwrap();
        let share = p.eigenvalues[0] / (p.eigenvalues[0] + p.eigenvalues[1]);
        assert!((0.3..=0.7).contains(&share), "share {share}");
    }

    #[test]
    fn pca_beats_random_rank_two_bases() {
        let mut rng = SeededRng::new(5);
        let features: Vec<Vec<f64>> = (0..60)
            .map(|s| {
                vec![
                    (s as f64 * 0.3).sin() + 0.1 * rng.next_normal(),
                    s as f64 * 0.05,
                    0.2 * rng.next_normal(),
                ]
            })
            .collect();
        let traj = traj_from_features(features.clone());
        let p = pca_project(&traj).unwrap();
        let captured = p.eigenvalues[0] + p.eigenvalues[1];

        let mean: Vec<f64> = (0..3)
            .map(|d| features.iter().map(|f| f[d]).sum::<f64>() / features.len() as f64)
            .collect();
        let mut search = SeededRng::new(77);
        for _ in 0..200 {
            let b1 = search.unit_vec(3);
            let mut b2 = search.normal_vec(3);
            let proj: f64 = b2.iter().zip(&b1).map(|(x, y)| x * y).sum();
            for (x, y) in b2.iter_mut().zip(&b1) {
                *x -= proj * y;
            }
            let n: f64 = b2.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < 1e-9 {
                continue;
            }
            for x in b2.iter_mut() {
                *x /= n;
            }
            let var: f64 = features
                .iter()
                .map(|f| {
                    let c: Vec<f64> = f.iter().zip(&mean).map(|(x, m)| x - m).collect();
                    let p1: f64 = c.iter().zip(&b1).map(|(x, y)| x * y).sum();
                    let p2: f64 = c.iter().zip(&b2).map(|(x, y)| x * y).sum();
                    p1 * p1 + p2 * p2
                })
                .sum::<f64>()
                / features.len() as f64;
            assert!(var <= captured + 1e-9, "random basis captured {var} > {captured}");
        }
    }

    #[test]
    fn pca_sign_rule_is_deterministic() {
        let features: Vec<Vec<f64>> = (0..30).map(|s| vec![-(s as f64), 0.5 * s as f64]).collect();
        let p = pca_project(&traj_from_features(features)).unwrap();
        let q = pca_project(&traj_from_features(
            (0..30).map(|s| vec![-(s as f64), 0.5 * s as f64]).collect(),
        ))
        .unwrap();
        assert_eq!(p, q);
        // Leading component's first significant entry is positive, so the
        // x-decreasing line projects with decreasing first coordinate.
        assert!(p.points[0][0] > p.points[29][0]);
    }

    #[test]
    fn pca_rejects_degenerate_input() {
        let t = traj_from_features(vec![vec![1.0, 2.0]; 5]);
        assert!(pca_project(&t).is_err());
    }

    #[test]
    fn raster_single_point_and_translation() {
        let g = rasterize(&[vec![0.0, 0.0]], RASTER_EXTENT).unwrap();
        assert_eq!(g.iter().filter(|&&v| v > 0.0).count(), 1);
        assert_relative_eq!(g[32 * 64 + 32], 1.0);

        let width = 2.0 * RASTER_EXTENT / RASTER_SIZE as f64;
        let pts: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![1.0, -2.0], vec![0.5, 0.5]];
        let shifted: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] + width, p[1]]).collect();
        let a = rasterize(&pts, RASTER_EXTENT).unwrap();
        let b = rasterize(&shifted, RASTER_EXTENT).unwrap();
        for i in 0..RASTER_SIZE - 1 {
            for j in 0..RASTER_SIZE {
                assert_eq!(a[i * RASTER_SIZE + j], b[(i + 1) * RASTER_SIZE + j]);
            }
        }
    }

    #[test]
    fn raster_drops_out_of_range_points() {
        let g = rasterize(&[vec![100.0, 0.0], vec![0.0, -100.0]], RASTER_EXTENT).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        // Right/top edges are exclusive, left/bottom inclusive.
        let g = rasterize(&[vec![RASTER_EXTENT, 0.0]], RASTER_EXTENT).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let g = rasterize(&[vec![-RASTER_EXTENT, 0.0]], RASTER_EXTENT).unwrap();
        assert_eq!(g.iter().filter(|&&v| v > 0.0).count(), 1);
    }

    #[test]
    fn raster_gaussian_mass_concentrates() {
        let mut rng = SeededRng::new(1);
        let pts: Vec<Vec<f64>> = (0..10_000).map(|_| rng.normal_vec(2)).collect();
        let counts = rasterize(&pts, RASTER_EXTENT).unwrap();
        let total: f64 = counts.iter().sum();
        let block = |lo: usize, hi: usize| -> f64 {
            (lo..hi)
                .flat_map(|i| (lo..hi).map(move |j| (i, j)))
                .map(|(i, j)| counts[i * RASTER_SIZE + j])
                .sum()
        };
        // Cells are 0.1875 wide, so 24..40 covers the +-1.5 sigma box
        // (true mass 75%) and 28..36 the +-0.75 sigma box (true mass 30%).
        let inner = block(24, 40);
        assert!(inner / total > 0.5, "center share {}", inner / total);
        let tight = block(28, 36);
        assert!((0.25..0.35).contains(&(tight / total)), "tight share {}", tight / total);
    }

    #[test]
    fn psnr_identity_and_unit_error() {
        let a = vec![0.3; 64 * 64];
        assert_relative_eq!(psnr(&a, &a).unwrap(), 100.0);
        let zeros = vec![0.0; 64 * 64];
        let ones = vec![1.0; 64 * 64];
        assert_relative_eq!(psnr(&zeros, &ones).unwrap(), 0.0);
        assert!(psnr(&zeros, &ones[..100]).is_err());
    }

    fn reference_grids() -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![0.0; 64 * 64];
        let mut b = vec![0.0; 64 * 64];
        for i in 0..64 {
            for j in 0..64 {
                let (fi, fj) = (i as f64, j as f64);
                a[i * 64 + j] = (-((fi - 20.0).powi(2) + (fj - 28.0).powi(2)) / 50.0).exp();
                b[i * 64 + j] = (-((fi - 22.0).powi(2) + (fj - 30.0).powi(2)) / 60.0).exp();
            }
        }
        (a, b)
    }

    #[test]
    fn psnr_and_ssim_match_frozen_references() {
        let (a, b) = reference_grids();
        assert_relative_eq!(psnr(&a, &b).unwrap(), 24.836983754050888, max_relative = 1e-12);
        assert_relative_eq!(ssim(&a, &b).unwrap(), 0.8794644247839518, max_relative = 1e-10);
        assert_relative_eq!(ssim(&a, &a).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn ssim_prefers_structure_over_noise() {
        let mut rng = SeededRng::new(4);
        let mut wins = 0;
        for _ in 0..20 {
            let base: Vec<f64> = (0..64 * 64).map(|_| rng.next_f64()).collect();
            let shifted: Vec<f64> = base.iter().map(|v| (v + 0.05).min(1.0)).collect();
            let random: Vec<f64> = (0..64 * 64).map(|_| rng.next_f64()).collect();
            let s_shift = ssim(&base, &shifted).unwrap();
            let s_rand = ssim(&base, &random).unwrap();
            wins += (s_shift > s_rand) as usize;
        }
        assert_eq!(wins, 20);
    }

    #[test]
    fn ssim_stays_in_range() {
        let mut rng = SeededRng::new(9);
        let a: Vec<f64> = (0..64 * 64).map(|_| rng.next_f64()).collect();
        let b: Vec<f64> = (0..64 * 64).map(|_| rng.next_f64()).collect();
        let s = ssim(&a, &b).unwrap();
        assert!((-1.0..=1.0).contains(&s));
        assert!(ssim(&a[..121], &b[..121]).is_ok());
        assert!(ssim(&a[..100], &b[..100]).is_err());
    }

    #[test]
    fn endpoint_error_basics() {
        assert_relative_eq!(endpoint_rel_err(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_relative_eq!(
            endpoint_rel_err(&[2.0, 0.0], &[1.0, 0.0]).unwrap(),
            1.0
        );
        assert!(endpoint_rel_err(&[1.0], &[0.0]).is_err());
        assert!(endpoint_rel_err(&[1.0, 2.0], &[1.0]).is_err());
    }
}
