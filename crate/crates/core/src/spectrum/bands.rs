use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::transform::FrequencyCoord;

/// One of the nested annular frequency bands, 1-based: `B1` is the lowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Band(u8);

impl Band {
    pub const B1: Band = Band(1);
    pub const B2: Band = Band(2);
    pub const B3: Band = Band(3);
    pub const B4: Band = Band(4);

    pub fn new(index: u8) -> Option<Band> {
        (index >= 1 && index <= 8).then_some(Band(index))
    }

    /// 1-based band index.
    pub fn index(&self) -> u8 {
        self.0
    }

    pub fn all_four() -> [Band; 4] {
        [Band::B1, Band::B2, Band::B3, Band::B4]
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{}", self.0)
    }
}

impl FromStr for Band {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let err = || format!("invalid band '{s}' (expected B1, B2, B3 or B4)");
        let idx: u8 = s
            .strip_prefix('B')
            .or_else(|| s.strip_prefix('b'))
            .ok_or_else(err)?
            .parse()
            .map_err(|_| err())?;
        if (1..=4).contains(&idx) {
            Ok(Band(idx))
        } else {
            Err(err())
        }
    }
}

impl TryFrom<String> for Band {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<Band> for String {
    fn from(b: Band) -> String {
        b.to_string()
    }
}

/// A small set of bands, used for per-class assignments and keep/stop masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "Vec<String>", try_from = "Vec<String>")]
pub struct BandSet(u8);

impl BandSet {
    pub fn empty() -> Self {
        BandSet(0)
    }

    pub fn of(bands: &[Band]) -> Self {
        let mut s = BandSet::empty();
        for &b in bands {
            s.insert(b);
        }
        s
    }

    /// All four bands `B1..B4`.
    pub fn full() -> Self {
        BandSet::of(&Band::all_four())
    }

    pub fn insert(&mut self, b: Band) {
        self.0 |= 1 << (b.index() - 1);
    }

    pub fn contains(&self, b: Band) -> bool {
        self.0 & (1 << (b.index() - 1)) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = Band> + '_ {
        (1..=8).filter_map(move |i| {
            let b = Band(i);
            self.contains(b).then_some(b)
        })
    }

    /// Complement within a partition of `n_bands` bands.
    pub fn complement(&self, n_bands: usize) -> BandSet {
        let all = ((1u16 << n_bands) - 1) as u8;
        BandSet(!self.0 & all)
    }

    /// Set difference.
    pub fn without(&self, b: Band) -> BandSet {
        BandSet(self.0 & !(1 << (b.index() - 1)))
    }
}

impl fmt::Display for BandSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|b| b.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl From<BandSet> for Vec<String> {
    fn from(s: BandSet) -> Vec<String> {
        s.iter().map(|b| b.to_string()).collect()
    }
}

impl TryFrom<Vec<String>> for BandSet {
    type Error = String;
    fn try_from(names: Vec<String>) -> std::result::Result<Self, String> {
        let mut s = BandSet::empty();
        for n in names {
            s.insert(n.parse()?);
        }
        Ok(s)
    }
}

/// Partition of a centered square spectrum into nested annuli of equal
/// radial width. Band `k` covers radii `[t_{k-1}, t_k)`; the outermost band
/// is closed above (it also takes the grid corners beyond `side/2`).
#[derive(Debug, Clone, PartialEq)]
pub struct BandPartition {
    pub side: usize,
    pub n_bands: usize,
    /// Upper radius cut of each band: `k * (side/2) / n_bands`.
    pub thresholds: Vec<f64>,
    /// 1-based band index per centered cell, row-major.
    assignment: Vec<u8>,
}

/// Split a `side x side` centered spectrum into `n_bands` equal-width annuli.
pub fn band_partition(side: usize, n_bands: usize) -> Result<BandPartition> {
    if side == 0 || side % 2 != 0 {
        return Err(Error::OddSide { side });
    }
    if n_bands < 2 || n_bands > 8 {
        return Err(Error::TooFewBands { n_bands });
    }
    let half = (side / 2) as f64;
    let thresholds: Vec<f64> = (1..=n_bands)
        .map(|k| k as f64 * half / n_bands as f64)
        .collect();
    let c = (side / 2) as i32;
    let mut assignment = vec![0u8; side * side];
    for i in 0..side {
        for j in 0..side {
            let f = FrequencyCoord::new(i as i32 - c, j as i32 - c);
            let r = f.radius();
            let band = thresholds
                .iter()
                .position(|&t| r < t)
                .map(|k| k + 1)
                .unwrap_or(n_bands);
            assignment[i * side + j] = band as u8;
        }
    }
    Ok(BandPartition {
        side,
        n_bands,
        thresholds,
        assignment,
    })
}

impl BandPartition {
    pub fn band_of(&self, f: FrequencyCoord) -> Band {
        let c = (self.side / 2) as i32;
        let i = (f.u + c) as usize;
        let j = (f.v + c) as usize;
        Band(self.assignment[i * self.side + j])
    }

    pub fn band_at_index(&self, i: usize, j: usize) -> Band {
        Band(self.assignment[i * self.side + j])
    }

    /// Number of cells assigned to the band.
    pub fn member_count(&self, b: Band) -> usize {
        self.assignment
            .iter()
            .filter(|&&a| a == b.index())
            .count()
    }

    /// All frequencies assigned to the band.
    pub fn members(&self, b: Band) -> Vec<FrequencyCoord> {
        let c = (self.side / 2) as i32;
        let mut out = Vec::new();
        for i in 0..self.side {
            for j in 0..self.side {
                if self.assignment[i * self.side + j] == b.index() {
                    out.push(FrequencyCoord::new(i as i32 - c, j as i32 - c));
                }
            }
        }
        out
    }

    /// Integer radii (rounded Euclidean) that contain at least one grid cell.
    pub fn max_rounded_radius(&self) -> u32 {
        let half = (self.side / 2) as f64;
        (half * std::f64::consts::SQRT_2).round() as u32
    }
}

/// Binary keep-mask over a centered spectrum (keep = `true`).
///
/// Point symmetry `bit(u,v) == bit(-u,-v)` is enforced at construction so
/// that every filtered image stays real.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMask {
    pub height: usize,
    pub width: usize,
    pub bits: Vec<bool>,
}

impl FrequencyMask {
    /// Build from raw bits, rejecting point-asymmetric masks.
    pub fn from_bits(side: usize, bits: Vec<bool>) -> Result<Self> {
        assert_eq!(bits.len(), side * side, "mask buffer length mismatch");
        let mask = FrequencyMask {
            height: side,
            width: side,
            bits,
        };
        let c = (side / 2) as i32;
        for i in 0..side {
            for j in 0..side {
                let f = FrequencyCoord::new(i as i32 - c, j as i32 - c);
                let p = f.partner(side);
                if mask.keep(f) != mask.keep(p) {
                    return Err(Error::AsymmetricMask { u: f.u, v: f.v });
                }
            }
        }
        Ok(mask)
    }

    pub fn all_true(side: usize) -> Self {
        FrequencyMask {
            height: side,
            width: side,
            bits: vec![true; side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.height
    }

    pub fn keep(&self, f: FrequencyCoord) -> bool {
        let c = (self.height / 2) as i32;
        let i = (f.u + c) as usize;
        let j = (f.v + c) as usize;
        self.bits[i * self.width + j]
    }

    pub fn kept_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Intersection with another mask of the same size.
    pub fn and(&self, other: &FrequencyMask) -> FrequencyMask {
        assert_eq!((self.height, self.width), (other.height, other.width));
        FrequencyMask {
            height: self.height,
            width: self.width,
            bits: self
                .bits
                .iter()
                .zip(other.bits.iter())
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }
}

/// The filter geometries the pipeline uses.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskKind {
    /// Keep exactly the listed bands.
    KeepBands(BandSet),
    /// Remove the listed bands, keep the rest.
    BandStop(BandSet),
    /// Keep radii `r <= cutoff` (the boundary goes to the low side).
    LowPass(f64),
    /// Keep radii `r > cutoff`.
    HighPass(f64),
}

/// Build a keep-mask from a partition and a filter geometry.
pub fn make_mask(partition: &BandPartition, kind: &MaskKind) -> Result<FrequencyMask> {
    let side = partition.side;
    let half = (side / 2) as f64;
    let keep_set = match kind {
        MaskKind::KeepBands(s) => {
            if s.is_empty() {
                return Err(Error::EmptyKeepSet);
            }
            *s
        }
        MaskKind::BandStop(s) => {
            if s.is_empty() {
                return Err(Error::InvalidConfig(
                    "band-stop set must name at least one band".into(),
                ));
            }
            let keep = s.complement(partition.n_bands);
            if keep.is_empty() {
                return Err(Error::EmptyKeepSet);
            }
            keep
        }
        MaskKind::LowPass(cutoff) | MaskKind::HighPass(cutoff) => {
            if !(*cutoff > 0.0 && *cutoff <= half) {
                return Err(Error::InvalidCutoff {
                    cutoff: *cutoff,
                    max: half,
                });
            }
            BandSet::empty() // unused below
        }
    };
    for b in keep_set.iter() {
        if usize::from(b.index()) > partition.n_bands {
            return Err(Error::InvalidConfig(format!(
                "band {b} exceeds partition with {} bands",
                partition.n_bands
            )));
        }
    }

    let c = (side / 2) as i32;
    let mut bits = vec![false; side * side];
    for i in 0..side {
        for j in 0..side {
            let f = FrequencyCoord::new(i as i32 - c, j as i32 - c);
            bits[i * side + j] = match kind {
                MaskKind::KeepBands(_) | MaskKind::BandStop(_) => {
                    keep_set.contains(partition.band_at_index(i, j))
                }
                MaskKind::LowPass(cutoff) => f.radius() <= *cutoff,
                MaskKind::HighPass(cutoff) => f.radius() > *cutoff,
            };
        }
    }
    FrequencyMask::from_bits(side, bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_for_side_32() {
        let p = band_partition(32, 4).unwrap();
        assert_eq!(p.thresholds, vec![4.0, 8.0, 12.0, 16.0]);
    }

    #[test]
    fn thresholds_for_side_8_and_dc_band() {
        let p = band_partition(8, 4).unwrap();
        assert_eq!(p.thresholds, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.band_of(FrequencyCoord::new(0, 0)), Band::B1);
    }

    #[test]
    fn odd_side_rejected() {
        assert!(matches!(band_partition(9, 4), Err(Error::OddSide { .. })));
    }

    #[test]
    fn partition_covers_grid_exactly_once() {
        let p = band_partition(32, 4).unwrap();
        let total: usize = Band::all_four().iter().map(|&b| p.member_count(b)).sum();
        assert_eq!(total, 32 * 32);
        // every cell has a valid band index
        assert!(p.assignment.iter().all(|&a| (1..=4).contains(&a)));
    }

    #[test]
    fn boundary_goes_to_higher_band() {
        let p = band_partition(32, 4).unwrap();
        // radius exactly 4.0 -> B2 lower edge
        assert_eq!(p.band_of(FrequencyCoord::new(4, 0)), Band::B2);
        assert_eq!(p.band_of(FrequencyCoord::new(0, -4)), Band::B2);
        // corners beyond side/2 land in the outermost band
        assert_eq!(p.band_of(FrequencyCoord::new(-16, -16)), Band::B4);
    }

    #[test]
    fn keep_all_bands_is_identity_mask() {
        let p = band_partition(32, 4).unwrap();
        let m = make_mask(&p, &MaskKind::KeepBands(BandSet::full())).unwrap();
        assert_eq!(m.kept_count(), 32 * 32);
    }

    #[test]
    fn band_stop_is_complement_of_keep() {
        let p = band_partition(32, 4).unwrap();
        let stop = make_mask(&p, &MaskKind::BandStop(BandSet::of(&[Band::B2, Band::B3]))).unwrap();
        let keep = make_mask(&p, &MaskKind::KeepBands(BandSet::of(&[Band::B1, Band::B4]))).unwrap();
        assert_eq!(stop, keep);
        // spot-check the radii rule: keep r < 4 or r >= 12
        let c = 16i32;
        for i in 0..32usize {
            for j in 0..32usize {
                let f = FrequencyCoord::new(i as i32 - c, j as i32 - c);
                let r = f.radius();
                assert_eq!(stop.keep(f), r < 4.0 || r >= 12.0, "at {f:?} r={r}");
            }
        }
    }

    #[test]
    fn stopping_every_band_rejected() {
        let p = band_partition(32, 4).unwrap();
        assert!(matches!(
            make_mask(&p, &MaskKind::BandStop(BandSet::full())),
            Err(Error::EmptyKeepSet)
        ));
        assert!(matches!(
            make_mask(&p, &MaskKind::KeepBands(BandSet::empty())),
            Err(Error::EmptyKeepSet)
        ));
    }

    #[test]
    fn low_and_high_pass_are_complements() {
        let p = band_partition(32, 4).unwrap();
        let lo = make_mask(&p, &MaskKind::LowPass(4.0)).unwrap();
        let hi = make_mask(&p, &MaskKind::HighPass(4.0)).unwrap();
        for (a, b) in lo.bits.iter().zip(hi.bits.iter()) {
            assert_ne!(a, b);
        }
        // boundary radius goes to the low side
        assert!(lo.keep(FrequencyCoord::new(4, 0)));
        assert!(lo.keep(FrequencyCoord::new(0, 0)));
    }

    #[test]
    fn asymmetric_mask_rejected() {
        let mut bits = vec![true; 16];
        // break symmetry at (1,0) vs (-1,0) on a 4x4 grid (center = 2)
        bits[3 * 4 + 2] = false;
        let err = FrequencyMask::from_bits(4, bits).unwrap_err();
        assert!(matches!(err, Error::AsymmetricMask { .. }));
    }

    #[test]
    fn band_parsing() {
        assert_eq!("B1".parse::<Band>().unwrap(), Band::B1);
        assert_eq!("b4".parse::<Band>().unwrap(), Band::B4);
        assert!("B5".parse::<Band>().is_err());
        assert!("X1".parse::<Band>().is_err());
    }
}
