//! Synthetic Gaussian-blob adaptation problem with a closed-form Bayes oracle.
//!
//! Class means sit on a line; every domain observes `A (mu_c + sigma n) + b`
//! with `A` a rotation. Rotations and offsets preserve Mahalanobis geometry,
//! so the Bayes accuracy is the same in every domain and reduces to a 1-D
//! Gaussian interval integral along the line of means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{mask_partial, Dataset};
use crate::error::{Error, Result};
use crate::labelspace::{build_unified, DomainDecl, DomainSpec, TaxonomyConflict, UnifiedLabelSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyOptions {
    pub num_classes: usize,
    pub num_sources: usize,
    pub dim: usize,
    /// Distance between neighbouring class means, in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    /// Largest absolute per-domain rotation, radians.
    pub rotation: f64,
    /// Per-domain offset length, in units of `sigma`.
    pub offset: f64,
    pub samples_per_class: usize,
    pub test_per_class: usize,
    /// Second source annotates the last class of the first block with the
    /// first class of its own block, producing one taxonomy conflict.
    pub taxonomy_conflict: bool,
}

impl Default for ToyOptions {
    fn default() -> Self {
        Self {
            num_classes: 4,
            num_sources: 2,
            dim: 2,
            separation: 4.0,
            sigma: 1.0,
            rotation: 0.2,
            offset: 0.5,
            samples_per_class: 250,
            test_per_class: 500,
            taxonomy_conflict: false,
        }
    }
}

impl ToyOptions {
    pub fn new(num_classes: usize, num_sources: usize) -> Self {
        Self {
            num_classes,
            num_sources,
            ..Self::default()
        }
    }
}

/// Rotation in the plane of the first two coordinates followed by an offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    /// Row-major `dim x dim`, orthogonal.
    pub matrix: Vec<f64>,
    pub offset: Vec<f64>,
}

impl Affine {
    fn rotation(dim: usize, angle: f64, offset: Vec<f64>) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        let (s, c) = angle.sin_cos();
        matrix[0] = c;
        matrix[1] = -s;
        matrix[dim] = s;
        matrix[dim + 1] = c;
        Self { matrix, offset }
    }

    fn apply(&self, z: &[f64]) -> Vec<f64> {
        let d = z.len();
        (0..d)
            .map(|i| (0..d).map(|j| self.matrix[i * d + j] * z[j]).sum::<f64>() + self.offset[i])
            .collect()
    }

    fn invert(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let centered: Vec<f64> = x.iter().zip(&self.offset).map(|(a, b)| a - b).collect();
        (0..d)
            .map(|j| (0..d).map(|i| self.matrix[i * d + j] * centered[i]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyWorld {
    pub dim: usize,
    /// Unit vector carrying the class means.
    pub direction: Vec<f64>,
    /// Coordinate of each class mean along `direction`.
    pub positions: Vec<f64>,
    pub sigma: f64,
    /// One transform per source, then one for the target.
    pub transforms: Vec<Affine>,
    pub samples_per_class: usize,
}

impl ToyWorld {
    pub fn num_classes(&self) -> usize {
        self.positions.len()
    }

    /// Class means before any domain transform, `[C x dim]` row-major.
    pub fn means(&self) -> Vec<f64> {
        self.positions
            .iter()
            .flat_map(|&t| self.direction.iter().map(move |&u| t * u))
            .collect()
    }

    pub fn sample(&self, domain: usize, class: usize, rng: &mut impl Rng) -> Vec<f64> {
        let z: Vec<f64> = self
            .direction
            .iter()
            .map(|&u| self.positions[class] * u + self.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        self.transforms[domain].apply(&z)
    }

    /// Bayes-optimal decision in `domain` (nearest mean after undoing the transform).
    pub fn bayes_predict(&self, domain: usize, x: &[f64]) -> usize {
        let z = self.transforms[domain].invert(x);
        let means = self.means();
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..self.num_classes() {
            let d: f64 = z
                .iter()
                .zip(&means[c * self.dim..(c + 1) * self.dim])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    /// Closed-form Bayes accuracy under equal class priors.
    pub fn bayes_accuracy(&self) -> f64 {
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let mut order: Vec<usize> = (0..self.num_classes()).collect();
        order.sort_by(|&a, &b| self.positions[a].total_cmp(&self.positions[b]));
        let mut total = 0.0;
        for (rank, &c) in order.iter().enumerate() {
            let t = self.positions[c];
            let lo = if rank == 0 {
                f64::NEG_INFINITY
            } else {
                0.5 * (self.positions[order[rank - 1]] + t)
            };
            let hi = if rank + 1 == order.len() {
                f64::INFINITY
            } else {
                0.5 * (self.positions[order[rank + 1]] + t)
            };
            total += normal.cdf((hi - t) / self.sigma) - normal.cdf((lo - t) / self.sigma);
        }
        total / self.num_classes() as f64
    }

    /// `per_class` samples of every class in `domain`, ordered by class.
    pub fn draw(&self, domain: usize, per_class: usize, rng: &mut impl Rng) -> Dataset {
        let c = self.num_classes();
        let mut inputs = Vec::with_capacity(c * per_class * self.dim);
        let mut labels = Vec::with_capacity(c * per_class);
        for class in 0..c {
            for _ in 0..per_class {
                inputs.extend(self.sample(domain, class, rng).into_iter().map(|v| v as f32));
                labels.push(class as i64);
            }
        }
        Dataset {
            inputs,
            sample_shape: vec![self.dim],
            labels,
        }
    }
}

/// Everything needed to run the pipeline on the synthetic problem.
#[derive(Debug, Clone)]
pub struct ToyProblem {
    pub world: ToyWorld,
    pub space: UnifiedLabelSpace,
    pub domains: Vec<DomainSpec>,
    pub conflicts: Vec<TaxonomyConflict>,
    /// Per source, with labels already masked to the domain's classes.
    pub sources: Vec<Dataset>,
    /// Per source, the unmasked class of each sample.
    pub source_truth: Vec<Vec<i64>>,
    /// Target training inputs with their (hidden) true classes.
    pub target_train: Dataset,
    pub target_test: Dataset,
}

/// Builds a toy problem where source `k` labels the `k`-th contiguous block
/// of `ceil(C / K)` classes.
pub fn make_toy_world(opts: &ToyOptions, seed: u64) -> Result<ToyProblem> {
    let (c, k) = (opts.num_classes, opts.num_sources);
    if c < 2 || k < 2 {
        return Err(Error::Value(format!("toy world needs C >= 2 and K >= 2, got C={c}, K={k}")));
    }
    if opts.dim < 2 || opts.sigma <= 0.0 || opts.separation <= 0.0 {
        return Err(Error::Value("toy world needs dim >= 2, sigma > 0 and separation > 0".into()));
    }
    let block = c.div_ceil(k);
    if (k - 1) * block >= c {
        return Err(Error::Value(format!("{k} sources cannot each get a block of {block} out of {c} classes")));
    }
    if opts.taxonomy_conflict && block < 2 {
        return Err(Error::Value("a taxonomy conflict needs blocks of at least two classes".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut direction: Vec<f64> = (0..opts.dim).map(|_| rng.sample(StandardNormal)).collect();
    // keep the means in the rotated plane so domain shifts act on them
    for v in direction.iter_mut().skip(2) {
        *v = 0.0;
    }
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);
    let positions = (0..c)
        .map(|i| (i as f64 - (c as f64 - 1.0) / 2.0) * opts.separation * opts.sigma)
        .collect();
    let transforms = (0..=k)
        .map(|_| {
            let angle = opts.rotation * (2.0 * rng.random::<f64>() - 1.0);
            let mut off: Vec<f64> = (0..opts.dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = off.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            off.iter_mut().for_each(|v| *v *= opts.offset * opts.sigma / n);
            Affine::rotation(opts.dim, angle, off)
        })
        .collect();
    let world = ToyWorld {
        dim: opts.dim,
        direction,
        positions,
        sigma: opts.sigma,
        transforms,
        samples_per_class: opts.samples_per_class,
    };

    let name = |i: usize| format!("c{i}");
    let mut decls: Vec<DomainDecl> = (0..k)
        .map(|s| DomainDecl::source(format!("toy_s{}", s + 1), (s * block..((s + 1) * block).min(c)).map(name)))
        .collect();
    decls.push(DomainDecl::target("toy_t"));
    let (space, domains) = build_unified(&decls)?;
    let fine_class = block - 1;
    let coarse_class = block;
    let conflicts = if opts.taxonomy_conflict {
        vec![TaxonomyConflict::new(1, fine_class, 2, coarse_class, &domains)?]
    } else {
        Vec::new()
    };

    let mut sources = Vec::with_capacity(k);
    let mut source_truth = Vec::with_capacity(k);
    for s in 0..k {
        let raw = world.draw(s, opts.samples_per_class, &mut rng);
        let annotated: Vec<i64> = raw
            .labels
            .iter()
            .map(|&y| {
                if opts.taxonomy_conflict && s == 1 && y == fine_class as i64 {
                    coarse_class as i64
                } else {
                    y
                }
            })
            .collect();
        let masked = mask_partial(&annotated, &domains[s]);
        source_truth.push(raw.labels.clone());
        sources.push(raw.with_labels(masked)?);
    }
    let target_train = world.draw(k, opts.samples_per_class, &mut rng);
    let target_test = world.draw(k, opts.test_per_class, &mut rng);
    Ok(ToyProblem {
        world,
        space,
        domains,
        conflicts,
        sources,
        source_truth,
        target_train,
        target_test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelspace::VOID;

    #[test]
    fn block_split_four_by_two() {
        let p = make_toy_world(&ToyOptions::new(4, 2), 7).unwrap();
        assert_eq!(p.domains[0].labeled_classes(), [0, 1].into());
        assert_eq!(p.domains[1].labeled_classes(), [2, 3].into());
        for (s, d) in p.sources.iter().enumerate() {
            assert!(d.labels.iter().all(|&y| y == VOID || p.domains[s].is_labeled(y)));
        }
        assert!(p.target_train.len() > 0);
    }

    #[test]
    fn rejects_degenerate_splits() {
        assert!(make_toy_world(&ToyOptions::new(1, 2), 0).is_err());
        assert!(make_toy_world(&ToyOptions::new(4, 1), 0).is_err());
        assert!(make_toy_world(&ToyOptions::new(4, 4), 0).is_ok());
        // blocks of 2 over 4 classes leave the third source empty
        assert!(make_toy_world(&ToyOptions::new(4, 3), 0).is_err());
    }

    #[test]
    fn zero_shift_gives_identical_domains() {
        let opts = ToyOptions {
            rotation: 0.0,
            offset: 0.0,
            ..ToyOptions::default()
        };
        let p = make_toy_world(&opts, 3).unwrap();
        let first = &p.world.transforms[0];
        assert!(p.world.transforms.iter().all(|t| t == first));
        // same seed stream per domain gives identical draws
        let a = p.world.draw(0, 20, &mut ChaCha8Rng::seed_from_u64(1));
        let b = p.world.draw(2, 20, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
    }

    #[test]
    fn bayes_accuracy_matches_interval_formula() {
        // separation 4 sigma, 4 classes: two outer cells Phi(2), two inner 2 Phi(2) - 1
        let p = make_toy_world(&ToyOptions::new(4, 2), 1).unwrap();
        let phi2 = 0.977_249_868_051_820_8;
        let expected = (2.0 * phi2 + 2.0 * (2.0 * phi2 - 1.0)) / 4.0;
        let got = p.world.bayes_accuracy();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn well_separated_classes_are_nearly_perfect() {
        let opts = ToyOptions {
            separation: 6.0,
            ..ToyOptions::new(4, 2)
        };
        let p = make_toy_world(&opts, 5).unwrap();
        assert!(p.world.bayes_accuracy() >= 0.99);
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let p = make_toy_world(&ToyOptions::new(4, 2), 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let data = p.world.draw(2, 20_000, &mut rng);
        let hits = (0..data.len())
            .filter(|&i| {
                let x: Vec<f64> = data.sample(i).iter().map(|&v| v as f64).collect();
                p.world.bayes_predict(2, &x) as i64 == data.labels[i]
            })
            .count();
        let mc = hits as f64 / data.len() as f64;
        // 80k draws: binomial std ~ 0.0007
        assert!((mc - p.world.bayes_accuracy()).abs() < 0.004, "mc {mc}");
    }

    #[test]
    fn taxonomy_variant_relabels_fine_class() {
        let opts = ToyOptions {
            taxonomy_conflict: true,
            ..ToyOptions::new(4, 2)
        };
        let p = make_toy_world(&opts, 2).unwrap();
        assert_eq!(p.conflicts.len(), 1);
        let c = p.conflicts[0];
        assert_eq!((c.fine_domain, c.fine_class, c.coarse_domain, c.coarse_class), (1, 1, 2, 2));
        let s2 = &p.sources[1];
        for (y, t) in s2.labels.iter().zip(&p.source_truth[1]) {
            if *t == 1 {
                assert_eq!(*y, 2);
            }
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let a = make_toy_world(&ToyOptions::default(), 42).unwrap();
        let b = make_toy_world(&ToyOptions::default(), 42).unwrap();
        assert_eq!(a.sources, b.sources);
        assert_eq!(a.target_test, b.target_test);
        assert_eq!(a.world, b.world);
    }
}
