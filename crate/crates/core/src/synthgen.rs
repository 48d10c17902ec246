//! Generation of the four synthetic datasets `Syn_b`, `b` in `{B1..B4}`.
//!
//! Each dataset has four classes of 32x32 grayscale images whose spectra are
//! built from a small number of sampled frequencies:
//!
//! | class | frequency bands | special pattern |
//! |-------|-----------------|-----------------|
//! | `C0`  | all but `b`     | embedded        |
//! | `C1`  | all but `b`     | zeroed          |
//! | `C2`  | all four        | zeroed          |
//! | `C3`  | only `b`        | zeroed          |
//!
//! The special pattern is the fixed diagonal set `(u,u)` with odd `u <= 15`;
//! it is the designed signature that separates `C0` from `C1`. Radii are
//! drawn from the decaying law [`radial_pdf`], favoring low frequencies.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io;
use crate::spectrum::{
    band_partition, idft2, radial_pdf, Band, BandPartition, BandSet, FrequencyCoord, RadialPdf,
    Spectrum,
};

/// The fixed diagonal frequencies embedded only in class `C0`.
pub const SPECIAL_PATTERN_US: [i32; 8] = [1, 3, 5, 7, 9, 11, 13, 15];

pub const SYN_SIDE: usize = 32;
pub const SYN_CLASSES: usize = 4;

/// Per-class band assignments and special-pattern rules for one `Syn_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub bias_band: Band,
    /// Allowed sampling bands per class `C0..C3`.
    pub class_bands: [BandSet; SYN_CLASSES],
    /// Positive-diagonal members of the special pattern.
    pub special_pattern: Vec<FrequencyCoord>,
    pub side: usize,
    pub n_classes: usize,
}

/// Band table for `Syn_b`: `C0, C1 = B \ {b}`, `C2 = B`, `C3 = {b}`.
pub fn build_spec(b: Band) -> SyntheticDatasetSpec {
    let full = BandSet::full();
    SyntheticDatasetSpec {
        bias_band: b,
        class_bands: [full.without(b), full.without(b), full, BandSet::of(&[b])],
        special_pattern: SPECIAL_PATTERN_US
            .iter()
            .map(|&u| FrequencyCoord::new(u, u))
            .collect(),
        side: SYN_SIDE,
        n_classes: SYN_CLASSES,
    }
}

impl SyntheticDatasetSpec {
    pub fn class_names(&self) -> Vec<String> {
        (0..self.n_classes).map(|c| format!("C{c}")).collect()
    }
}

/// Sampling knobs for dataset generation. The paper pins only "at least
/// eight frequencies" per image; frequency count, amplitude and phase laws
/// are configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Samples per class in each split.
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Per-image frequency count is uniform in `[k_min, k_max]`.
    pub k_min: usize,
    pub k_max: usize,
    /// Base amplitude is uniform in `[amp_min, amp_max]`, then scaled by
    /// `1/(r+1)`.
    pub amp_min: f64,
    pub amp_max: f64,
    /// Guarantee at least one sampled frequency in every allowed band, so
    /// the per-class band table holds for each individual image.
    pub ensure_band_coverage: bool,
}

impl GenerationConfig {
    pub fn new(n_train: usize, n_val: usize, n_test: usize, seed: u64) -> Self {
        GenerationConfig {
            n_train,
            n_val,
            n_test,
            seed,
            k_min: 8,
            k_max: 24,
            amp_min: 0.5,
            amp_max: 1.0,
            ensure_band_coverage: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min < 8 {
            return Err(Error::InvalidConfig(format!(
                "k_min must be at least 8, got {}",
                self.k_min
            )));
        }
        if self.k_max < self.k_min {
            return Err(Error::InvalidConfig(format!(
                "k_max {} below k_min {}",
                self.k_max, self.k_min
            )));
        }
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(Error::InvalidConfig(
                "every split needs at least one sample per class".into(),
            ));
        }
        if !(self.amp_min > 0.0 && self.amp_max >= self.amp_min) {
            return Err(Error::InvalidConfig(format!(
                "invalid amplitude range [{}, {}]",
                self.amp_min, self.amp_max
            )));
        }
        Ok(())
    }

    pub fn count_for(&self, split: &str) -> usize {
        match split {
            "train" => self.n_train,
            "val" => self.n_val,
            _ => self.n_test,
        }
    }
}

/// Frequencies sharing one rounded radius, with the restricted radial law
/// renormalized over the populated bins.
#[derive(Debug, Clone)]
struct BinnedSampler {
    bins: Vec<Vec<FrequencyCoord>>,
    /// Cumulative probability per bin.
    cumulative: Vec<f64>,
}

impl BinnedSampler {
    fn build(pdf: &RadialPdf, groups: Vec<(u32, Vec<FrequencyCoord>)>) -> Option<Self> {
        if groups.is_empty() {
            return None;
        }
        let weights: Vec<f64> = groups.iter().map(|(r, _)| pdf.prob(*r)).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w / total;
            cumulative.push(acc);
        }
        Some(BinnedSampler {
            bins: groups.into_iter().map(|(_, g)| g).collect(),
            cumulative,
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> FrequencyCoord {
        let u: f64 = rng.gen();
        let bin = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.bins.len() - 1);
        let members = &self.bins[bin];
        members[rng.gen_range(0..members.len())]
    }

    fn contains_unchosen(&self, chosen: &[FrequencyCoord]) -> Option<FrequencyCoord> {
        self.bins
            .iter()
            .flatten()
            .find(|f| !chosen.contains(f))
            .copied()
    }
}

/// Precomputed sampling structures for one class of one `Syn_b`.
#[derive(Debug, Clone)]
struct ClassSampler {
    /// Whole allowed-band law.
    overall: BinnedSampler,
    /// One sampler per allowed band, ascending band order.
    per_band: Vec<BinnedSampler>,
}

/// Deterministic generator for one `(spec, config)` pair.
///
/// Every image draws from its own RNG stream keyed by
/// `(seed, split, class, index)`, so parallel and serial generation agree
/// bit for bit.
pub struct SynthGenerator {
    pub spec: SyntheticDatasetSpec,
    pub config: GenerationConfig,
    partition: BandPartition,
    samplers: Vec<ClassSampler>,
}

fn canonical(f: FrequencyCoord, side: usize) -> FrequencyCoord {
    let p = f.partner(side);
    let c = (side / 2) as i32;
    let key = |q: FrequencyCoord| (q.u + c) * side as i32 + (q.v + c);
    if key(f) <= key(p) {
        f
    } else {
        p
    }
}

impl SynthGenerator {
    pub fn new(spec: SyntheticDatasetSpec, config: GenerationConfig) -> Result<Self> {
        config.validate()?;
        let side = spec.side;
        let partition = band_partition(side, 4)?;
        let pdf = radial_pdf(partition.max_rounded_radius())?;

        // Canonical Hermitian-pair representatives, excluding DC and the
        // special-pattern pairs (those are forced or zeroed, never sampled).
        let special: Vec<FrequencyCoord> = spec
            .special_pattern
            .iter()
            .map(|&f| canonical(f, side))
            .collect();
        let c = (side / 2) as i32;
        let mut reps: Vec<FrequencyCoord> = Vec::new();
        for i in 0..side {
            for j in 0..side {
                let f = FrequencyCoord::new(i as i32 - c, j as i32 - c);
                if f == FrequencyCoord::new(0, 0) {
                    continue;
                }
                if canonical(f, side) != f {
                    continue;
                }
                if special.contains(&f) {
                    continue;
                }
                reps.push(f);
            }
        }

        let mut samplers = Vec::with_capacity(spec.n_classes);
        for class in 0..spec.n_classes {
            let allowed = spec.class_bands[class];
            let group = |filter: &dyn Fn(FrequencyCoord) -> bool| {
                let mut by_radius: Vec<(u32, Vec<FrequencyCoord>)> = Vec::new();
                for &f in &reps {
                    if !filter(f) {
                        continue;
                    }
                    let r = f.radius().round() as u32;
                    match by_radius.iter_mut().find(|(br, _)| *br == r) {
                        Some((_, g)) => g.push(f),
                        None => by_radius.push((r, vec![f])),
                    }
                }
                by_radius.sort_by_key(|(r, _)| *r);
                by_radius
            };
            let overall = BinnedSampler::build(
                &pdf,
                group(&|f| allowed.contains(partition.band_of(f))),
            )
            .ok_or(Error::EmptyRadiusSet { class })?;
            let mut per_band = Vec::new();
            for band in allowed.iter() {
                per_band.push(
                    BinnedSampler::build(&pdf, group(&|f| partition.band_of(f) == band))
                        .ok_or(Error::EmptyRadiusSet { class })?,
                );
            }
            samplers.push(ClassSampler { overall, per_band });
        }

        Ok(SynthGenerator {
            spec,
            config,
            partition,
            samplers,
        })
    }

    pub fn partition(&self) -> &BandPartition {
        &self.partition
    }

    /// Build the centered spectrum for one sample, before the inverse
    /// transform. Special-pattern bins are exactly forced (class `C0`) or
    /// exactly zero (other classes).
    pub fn sample_class_spectrum(&self, class: usize, rng: &mut ChaCha8Rng) -> Result<Spectrum> {
        if class >= self.spec.n_classes {
            return Err(Error::InvalidClass {
                class,
                n_classes: self.spec.n_classes,
            });
        }
        let side = self.spec.side;
        let sampler = &self.samplers[class];
        let k = rng.gen_range(self.config.k_min..=self.config.k_max);

        let mut chosen: Vec<FrequencyCoord> = Vec::with_capacity(k);
        let draw_from = |binned: &BinnedSampler,
                             chosen: &mut Vec<FrequencyCoord>,
                             rng: &mut ChaCha8Rng| {
            for _ in 0..1024 {
                let f = binned.draw(rng);
                if !chosen.contains(&f) {
                    chosen.push(f);
                    return true;
                }
            }
            // Degenerate fallback: take the first unchosen member.
            if let Some(f) = binned.contains_unchosen(chosen) {
                chosen.push(f);
                return true;
            }
            false
        };

        if self.config.ensure_band_coverage {
            for band_sampler in &sampler.per_band {
                if chosen.len() >= k {
                    break;
                }
                draw_from(band_sampler, &mut chosen, rng);
            }
        }
        while chosen.len() < k {
            if !draw_from(&sampler.overall, &mut chosen, rng) {
                break;
            }
        }

        let mut spec = Spectrum::zeros(1, side);
        for &f in &chosen {
            let base: f64 = rng.gen_range(self.config.amp_min..self.config.amp_max);
            let amp = base / (f.radius() + 1.0);
            if f.is_self_paired(side) {
                spec.set(0, f, Complex64::new(amp, 0.0));
            } else {
                let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let value = Complex64::from_polar(amp, phase);
                spec.set(0, f, value);
                spec.set(0, f.partner(side), value.conj());
            }
        }

        for &p in &self.spec.special_pattern {
            let partner = p.partner(side);
            if class == 0 {
                let value = Complex64::new(1.0 / (p.u as f64 + 1.0), 0.0);
                spec.set(0, p, value);
                spec.set(0, partner, value.conj());
            } else {
                spec.set(0, p, Complex64::new(0.0, 0.0));
                spec.set(0, partner, Complex64::new(0.0, 0.0));
            }
        }
        Ok(spec)
    }

    /// Draw one spatial image: build the spectrum, invert, min-max to `[0,1]`.
    pub fn sample_class_image(&self, class: usize, rng: &mut ChaCha8Rng) -> Result<Image> {
        let spec = self.sample_class_spectrum(class, rng)?;
        let mut img = idft2(&spec)?;
        img.normalize_min_max();
        Ok(img)
    }

    /// RNG stream for one image, keyed by `(seed, split, class, index)`.
    pub fn image_rng(&self, split: &str, class: usize, index: usize) -> ChaCha8Rng {
        let split_id: u64 = match split {
            "train" => 0,
            "val" => 1,
            _ => 2,
        };
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.config.seed.to_le_bytes());
        key[8..16].copy_from_slice(&split_id.to_le_bytes());
        key[16..24].copy_from_slice(&(class as u64).to_le_bytes());
        key[24..32].copy_from_slice(&(index as u64).to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    /// Generate one split, class-major order, in parallel.
    pub fn generate_split(&self, split: &str) -> Result<LabeledDataset> {
        let per_class = self.config.count_for(split);
        let class_names = self.spec.class_names();
        let jobs: Vec<(usize, usize)> = (0..self.spec.n_classes)
            .flat_map(|c| (0..per_class).map(move |i| (c, i)))
            .collect();
        let images: Result<Vec<Image>> = jobs
            .par_iter()
            .map(|&(class, index)| {
                let mut rng = self.image_rng(split, class, index);
                self.sample_class_image(class, &mut rng)
            })
            .collect();
        let labels: Vec<usize> = jobs.iter().map(|&(c, _)| c).collect();
        let ids: Vec<String> = jobs
            .iter()
            .map(|&(c, i)| {
                format!(
                    "{split}/{}/{i:05}",
                    io::class_dir_name(c, &class_names[c])
                )
            })
            .collect();
        LabeledDataset::new(images?, labels, ids, class_names, split)
    }
}

/// The three generated splits of one `Syn_b`.
pub struct GeneratedDataset {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

/// Generate `Syn_b` for `(spec, config)` and persist it to `root` in the
/// standard dataset layout with a manifest. Deterministic in `(spec, seed)`.
pub fn generate_dataset(
    spec: &SyntheticDatasetSpec,
    config: &GenerationConfig,
    root: &Path,
) -> Result<GeneratedDataset> {
    let generator = SynthGenerator::new(spec.clone(), config.clone())?;
    let train = generator.generate_split("train")?;
    let val = generator.generate_split("val")?;
    let test = generator.generate_split("test")?;

    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    io::write_split(root, &train)?;
    io::write_split(root, &val)?;
    io::write_split(root, &test)?;

    let mut counts = std::collections::BTreeMap::new();
    for ds in [&train, &val, &test] {
        counts.insert(ds.split.clone(), ds.per_class_counts());
    }
    let manifest = io::DatasetManifest {
        format: "freqlens-dataset-v1".into(),
        kind: format!("synthetic-{}", spec.bias_band),
        class_names: spec.class_names(),
        channels: 1,
        side: spec.side,
        counts,
        seed: Some(config.seed),
        spec: Some(serde_json::to_value(spec).expect("spec serializes")),
        config: Some(serde_json::to_value(config).expect("config serializes")),
    };
    io::write_manifest(root, &manifest)?;

    Ok(GeneratedDataset { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(seed: u64) -> GenerationConfig {
        GenerationConfig::new(4, 2, 2, seed)
    }

    #[test]
    fn band_table_matches_design() {
        let s1 = build_spec(Band::B1);
        let rest = BandSet::of(&[Band::B2, Band::B3, Band::B4]);
        assert_eq!(s1.class_bands[0], rest);
        assert_eq!(s1.class_bands[1], rest);
        assert_eq!(s1.class_bands[2], BandSet::full());
        assert_eq!(s1.class_bands[3], BandSet::of(&[Band::B1]));

        let s4 = build_spec(Band::B4);
        assert_eq!(s4.class_bands[3], BandSet::of(&[Band::B4]));

        for b in Band::all_four() {
            assert_eq!(build_spec(b).class_bands[2], BandSet::full());
        }
    }

    #[test]
    fn c0_has_special_pattern_c1_does_not() {
        let spec = build_spec(Band::B2);
        let gen = SynthGenerator::new(spec.clone(), tiny_config(11)).unwrap();
        let mut rng = gen.image_rng("train", 0, 0);
        let s0 = gen.sample_class_spectrum(0, &mut rng).unwrap();
        for &p in &spec.special_pattern {
            assert!(s0.value(0, p).norm() > 0.0, "C0 missing special at {p:?}");
            assert!(s0.value(0, p.partner(32)).norm() > 0.0);
        }
        for class in 1..4 {
            let mut rng = gen.image_rng("train", class, 0);
            let s = gen.sample_class_spectrum(class, &mut rng).unwrap();
            for &p in &spec.special_pattern {
                assert_eq!(s.value(0, p), Complex64::new(0.0, 0.0));
                assert_eq!(s.value(0, p.partner(32)), Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn c3_energy_confined_to_bias_band() {
        let gen = SynthGenerator::new(build_spec(Band::B1), tiny_config(3)).unwrap();
        let mut rng = gen.image_rng("test", 3, 1);
        let spec = gen.sample_class_spectrum(3, &mut rng).unwrap();
        let mut outside = 0.0;
        let mut inside = 0.0;
        for i in 0..32 {
            for j in 0..32 {
                let f = spec.coord_at(i, j);
                let e = spec.value(0, f).norm_sqr();
                if f.radius() < 4.0 {
                    inside += e;
                } else {
                    outside += e;
                }
            }
        }
        assert!(inside > 0.0);
        assert_eq!(outside, 0.0);
    }

    #[test]
    fn band_coverage_guarantee() {
        let gen = SynthGenerator::new(build_spec(Band::B4), tiny_config(5)).unwrap();
        let partition = gen.partition().clone();
        for index in 0..16 {
            let mut rng = gen.image_rng("train", 2, index);
            let spec = gen.sample_class_spectrum(2, &mut rng).unwrap();
            let mut seen = BandSet::empty();
            for i in 0..32 {
                for j in 0..32 {
                    let f = spec.coord_at(i, j);
                    if f != FrequencyCoord::new(0, 0) && spec.value(0, f).norm() > 0.0 {
                        seen.insert(partition.band_of(f));
                    }
                }
            }
            assert_eq!(seen, BandSet::full(), "C2 sample {index} misses a band");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = build_spec(Band::B3);
        let a = SynthGenerator::new(spec.clone(), tiny_config(42)).unwrap();
        let b = SynthGenerator::new(spec, tiny_config(42)).unwrap();
        let da = a.generate_split("val").unwrap();
        let db = b.generate_split("val").unwrap();
        assert_eq!(da.len(), db.len());
        for (x, y) in da.images.iter().zip(db.images.iter()) {
            assert_eq!(x.to_f32(), y.to_f32());
        }
    }

    #[test]
    fn split_counts_and_balance() {
        let gen = SynthGenerator::new(build_spec(Band::B1), tiny_config(1)).unwrap();
        let ds = gen.generate_split("train").unwrap();
        assert_eq!(ds.len(), 16);
        assert_eq!(ds.per_class_counts(), vec![4, 4, 4, 4]);
        let values_ok = ds
            .images
            .iter()
            .all(|img| img.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(values_ok);
    }

    #[test]
    fn invalid_k_min_rejected() {
        let mut config = tiny_config(1);
        config.k_min = 4;
        assert!(SynthGenerator::new(build_spec(Band::B1), config).is_err());
    }
}
