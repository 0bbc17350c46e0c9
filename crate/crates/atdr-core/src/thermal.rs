//! Intermediate thermal signatures: per-region variability rates drawn
//! from truncated Gaussian laws, and pixel-wise interpolation between
//! the ambient (TA) and operational (TF) texture states.
//!
//! A region's rate lambda lives in [0, 1]: ambient behavior keeps
//! lambda in [0, 0.1], operational in [0.9, 1], intermediate in the
//! open middle (0.1, 0.9). The laws are Gaussians centered at 0, 1 and
//! 0.5 (half-Gaussians at the ends), with standard deviations 0.1/3 for
//! the end modes and 0.4/3 for the middle so that over 99% of each law's
//! mass falls inside its interval; draws are rejection-sampled so the
//! supports are exact.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Image, Mask};

/// End-mode standard deviation (3 sigma spans the 0.1-wide interval).
pub const SIGMA_END: f64 = 0.1 / 3.0;
/// Intermediate-mode standard deviation (3 sigma spans 0.4 to each side).
pub const SIGMA_MID: f64 = 0.4 / 3.0;

#[derive(Debug, Error)]
pub enum ThermalError {
    #[error("texture dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("region map: {0}")]
    BadRegionMap(String),
    #[error("scenario missing region \"{0}\"")]
    ScenarioMissingRegion(String),
    #[error("unknown scenario \"{0}\"")]
    UnknownScenario(String),
}

/// Homogeneous thermal behavior areas of a vehicle.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ThermalRegion {
    Engine,
    Body,
    Muffler,
    Windows,
    RunningGear,
}

impl ThermalRegion {
    pub const ALL: [ThermalRegion; 5] = [
        ThermalRegion::Engine,
        ThermalRegion::Body,
        ThermalRegion::Muffler,
        ThermalRegion::Windows,
        ThermalRegion::RunningGear,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ThermalRegion::Engine => "engine",
            ThermalRegion::Body => "body",
            ThermalRegion::Muffler => "muffler",
            ThermalRegion::Windows => "windows",
            ThermalRegion::RunningGear => "running_gear",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|r| r.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThermalMode {
    Ambient,
    Intermediate,
    Operational,
}

impl ThermalMode {
    /// Mode interval; 0.1 belongs to ambient and 0.9 to operational, the
    /// intermediate interval is open on both sides.
    pub fn contains(&self, lambda: f64) -> bool {
        match self {
            ThermalMode::Ambient => (0.0..=0.1).contains(&lambda),
            ThermalMode::Intermediate => lambda > 0.1 && lambda < 0.9,
            ThermalMode::Operational => (0.9..=1.0).contains(&lambda),
        }
    }
}

/// Region-id label image plus the id -> region naming.
#[derive(Debug, Clone)]
pub struct RegionMap {
    labels: Image<u8>,
    names: BTreeMap<u8, ThermalRegion>,
}

impl RegionMap {
    /// Ids must be dense from 1 and every pixel labeled with a known id.
    pub fn new(
        labels: Image<u8>,
        names: BTreeMap<u8, ThermalRegion>,
    ) -> Result<Self, ThermalError> {
        if names.is_empty() {
            return Err(ThermalError::BadRegionMap("no regions named".into()));
        }
        let n = names.len() as u8;
        for id in 1..=n {
            if !names.contains_key(&id) {
                return Err(ThermalError::BadRegionMap(format!(
                    "region ids must be dense from 1; missing {id}"
                )));
            }
        }
        let mut seen = vec![false; n as usize + 1];
        for &id in labels.pixels() {
            if id == 0 || id > n {
                return Err(ThermalError::BadRegionMap(format!(
                    "pixel labeled {id}, expected 1..={n}"
                )));
            }
            seen[id as usize] = true;
        }
        for id in 1..=n {
            if !seen[id as usize] {
                return Err(ThermalError::BadRegionMap(format!(
                    "region {id} ({}) labels no pixel",
                    names[&id].name()
                )));
            }
        }
        Ok(Self { labels, names })
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn regions(&self) -> impl Iterator<Item = ThermalRegion> + '_ {
        self.names.values().copied()
    }

    pub fn region_at(&self, x: usize, y: usize) -> ThermalRegion {
        self.names[&self.labels.get(x, y)]
    }

    /// Mask of one region's pixels.
    pub fn region_mask(&self, region: ThermalRegion) -> Mask {
        let id = self
            .names
            .iter()
            .find(|(_, &r)| r == region)
            .map(|(&id, _)| id);
        self.labels.map(|p| Some(p) == id)
    }

    /// Loads an 8-bit indexed label image plus a JSON name map
    /// `{"1": "engine", ...}`.
    pub fn load(
        label_path: &std::path::Path,
        names_path: &std::path::Path,
    ) -> Result<Self, ThermalError> {
        let img = Image::<u16>::load(label_path)
            .map_err(|e| ThermalError::BadRegionMap(e.to_string()))?;
        let labels = img.map(|p| {
            // accept either raw ids or ids scaled into 16-bit range
            if p > 255 {
                (p / 257) as u8
            } else {
                p as u8
            }
        });
        let text = std::fs::read_to_string(names_path)
            .map_err(|e| ThermalError::BadRegionMap(e.to_string()))?;
        let raw: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| ThermalError::BadRegionMap(e.to_string()))?;
        let mut names = BTreeMap::new();
        for (id, name) in raw {
            let id: u8 = id
                .parse()
                .map_err(|_| ThermalError::BadRegionMap(format!("bad region id \"{id}\"")))?;
            let region = ThermalRegion::from_name(&name)
                .ok_or_else(|| ThermalError::BadRegionMap(format!("unknown region \"{name}\"")))?;
            names.insert(id, region);
        }
        Self::new(labels, names)
    }
}

/// Sampled per-region state: the mode and its drawn rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermalConfig {
    pub regions: BTreeMap<ThermalRegion, RegionState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionState {
    pub mode: ThermalMode,
    pub lambda: f64,
}

/// Per-region mode assignment, either one of the built-in named
/// scenarios or an explicit map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThermalScenario {
    Named(String),
    Explicit(BTreeMap<ThermalRegion, ThermalMode>),
}

impl ThermalScenario {
    /// Resolves to an explicit assignment. Built-ins: "ambient" (all
    /// cold), "operational" (all hot), "standby" (engine and muffler
    /// hot, rest ambient).
    pub fn resolve(&self) -> Result<BTreeMap<ThermalRegion, ThermalMode>, ThermalError> {
        match self {
            ThermalScenario::Explicit(map) => Ok(map.clone()),
            ThermalScenario::Named(name) => {
                let all = |mode: ThermalMode| {
                    ThermalRegion::ALL.iter().map(move |&r| (r, mode)).collect()
                };
                match name.as_str() {
                    "ambient" => Ok(all(ThermalMode::Ambient)),
                    "operational" => Ok(all(ThermalMode::Operational)),
                    "standby" => {
                        let mut map: BTreeMap<ThermalRegion, ThermalMode> =
                            all(ThermalMode::Ambient);
                        map.insert(ThermalRegion::Engine, ThermalMode::Operational);
                        map.insert(ThermalRegion::Muffler, ThermalMode::Operational);
                        Ok(map)
                    }
                    other => Err(ThermalError::UnknownScenario(other.to_string())),
                }
            }
        }
    }
}

/// Draws a variability rate from the mode's law and reports how many
/// draws the rejection loop needed.
pub fn sample_lambda_with_attempts(mode: ThermalMode, rng: &mut impl Rng) -> (f64, u32) {
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        let candidate = match mode {
            // half-Gaussians at the interval ends
            ThermalMode::Ambient => {
                let n = Normal::new(0.0, SIGMA_END).expect("valid sigma");
                n.sample(rng).abs()
            }
            ThermalMode::Operational => {
                let n = Normal::new(0.0, SIGMA_END).expect("valid sigma");
                1.0 - n.sample(rng).abs()
            }
            ThermalMode::Intermediate => {
                let n = Normal::new(0.5, SIGMA_MID).expect("valid sigma");
                n.sample(rng)
            }
        };
        if mode.contains(candidate) {
            return (candidate, attempts);
        }
    }
}

/// Draws a variability rate inside the mode's interval.
pub fn sample_lambda(mode: ThermalMode, rng: &mut impl Rng) -> f64 {
    sample_lambda_with_attempts(mode, rng).0
}

/// Samples one state per region of the map according to the scenario.
pub fn sample_config(
    regions: &RegionMap,
    scenario: &BTreeMap<ThermalRegion, ThermalMode>,
    rng: &mut impl Rng,
) -> Result<ThermalConfig, ThermalError> {
    let mut states = BTreeMap::new();
    for region in regions.regions() {
        let mode = *scenario
            .get(&region)
            .ok_or_else(|| ThermalError::ScenarioMissingRegion(region.name().to_string()))?;
        let lambda = sample_lambda(mode, rng);
        states.insert(region, RegionState { mode, lambda });
    }
    Ok(ThermalConfig { regions: states })
}

/// Pixel-wise blend out = (1 - lambda_R)·ta + lambda_R·tf, with lambda
/// taken from the pixel's region. Endpoints reproduce the inputs
/// exactly.
pub fn interpolate_texture(
    ta: &Image<u16>,
    tf: &Image<u16>,
    regions: &RegionMap,
    config: &ThermalConfig,
) -> Result<Image<u16>, ThermalError> {
    if ta.width() != tf.width() || ta.height() != tf.height() {
        return Err(ThermalError::DimensionMismatch(
            ta.width(),
            ta.height(),
            tf.width(),
            tf.height(),
        ));
    }
    if ta.width() != regions.width() || ta.height() != regions.height() {
        return Err(ThermalError::DimensionMismatch(
            ta.width(),
            ta.height(),
            regions.width(),
            regions.height(),
        ));
    }
    let mut out = Image::filled(ta.width(), ta.height(), 0u16);
    for y in 0..ta.height() {
        for x in 0..ta.width() {
            let region = regions.region_at(x, y);
            let state = config
                .regions
                .get(&region)
                .ok_or_else(|| ThermalError::ScenarioMissingRegion(region.name().to_string()))?;
            let lambda = state.lambda;
            let a = ta.get(x, y) as f64;
            let f = tf.get(x, y) as f64;
            let v = (1.0 - lambda) * a + lambda * f;
            out.set(x, y, v.round().clamp(0.0, 65535.0) as u16);
        }
    }
    Ok(out)
}

/// Draws `count` independent configs and interpolated textures for one
/// scenario.
pub fn make_signature_set(
    ta: &Image<u16>,
    tf: &Image<u16>,
    regions: &RegionMap,
    scenario: &BTreeMap<ThermalRegion, ThermalMode>,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<(Image<u16>, ThermalConfig)>, ThermalError> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let config = sample_config(regions, scenario, rng)?;
        let texture = interpolate_texture(ta, tf, regions, &config)?;
        out.push((texture, config));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_region_map(w: usize, h: usize) -> RegionMap {
        // left half engine, right half body
        let mut labels = Image::filled(w, h, 1u8);
        for y in 0..h {
            for x in w / 2..w {
                labels.set(x, y, 2);
            }
        }
        let names = BTreeMap::from([(1u8, ThermalRegion::Engine), (2u8, ThermalRegion::Body)]);
        RegionMap::new(labels, names).unwrap()
    }

    fn full_scenario(mode: ThermalMode) -> BTreeMap<ThermalRegion, ThermalMode> {
        ThermalRegion::ALL.iter().map(|&r| (r, mode)).collect()
    }

    #[test]
    fn lambda_stays_in_mode_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for mode in [
            ThermalMode::Ambient,
            ThermalMode::Intermediate,
            ThermalMode::Operational,
        ] {
            for _ in 0..10_000 {
                let lambda = sample_lambda(mode, &mut rng);
                assert!(mode.contains(lambda), "{mode:?}: {lambda}");
            }
        }
    }

    #[test]
    fn lambda_sampler_acceptance_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for mode in [
            ThermalMode::Ambient,
            ThermalMode::Intermediate,
            ThermalMode::Operational,
        ] {
            let mut attempts = 0u64;
            let n = 20_000;
            for _ in 0..n {
                attempts += sample_lambda_with_attempts(mode, &mut rng).1 as u64;
            }
            let acceptance = n as f64 / attempts as f64;
            assert!(acceptance >= 0.985, "{mode:?}: acceptance {acceptance}");
        }
    }

    #[test]
    fn lambda_deterministic_under_seed() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10)
                .map(|_| sample_lambda(ThermalMode::Operational, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn interpolation_endpoints_bit_exact() {
        let map = two_region_map(16, 8);
        let mut ta = Image::filled(16, 8, 0u16);
        let mut tf = Image::filled(16, 8, 0u16);
        for (i, p) in ta.pixels_mut().iter_mut().enumerate() {
            *p = (100 + i * 13 % 5000) as u16;
        }
        for (i, p) in tf.pixels_mut().iter_mut().enumerate() {
            *p = (40000 + i * 7 % 9000) as u16;
        }
        let config_at = |lambda: f64, mode| ThermalConfig {
            regions: map
                .regions()
                .map(|r| (r, RegionState { mode, lambda }))
                .collect(),
        };
        let at_zero =
            interpolate_texture(&ta, &tf, &map, &config_at(0.0, ThermalMode::Ambient)).unwrap();
        assert_eq!(at_zero, ta);
        let at_one =
            interpolate_texture(&ta, &tf, &map, &config_at(1.0, ThermalMode::Operational))
                .unwrap();
        assert_eq!(at_one, tf);
    }

    #[test]
    fn interpolation_midpoint_constant() {
        // single region, lambda = 0.5, ta = 100, tf = 200 -> 150
        let labels = Image::filled(8, 8, 1u8);
        let map = RegionMap::new(labels, BTreeMap::from([(1u8, ThermalRegion::Body)])).unwrap();
        let ta = Image::filled(8, 8, 100u16);
        let tf = Image::filled(8, 8, 200u16);
        let config = ThermalConfig {
            regions: BTreeMap::from([(
                ThermalRegion::Body,
                RegionState {
                    mode: ThermalMode::Intermediate,
                    lambda: 0.5,
                },
            )]),
        };
        let out = interpolate_texture(&ta, &tf, &map, &config).unwrap();
        assert!(out.pixels().iter().all(|&p| p == 150));
    }

    #[test]
    fn interpolation_bounded_pixelwise() {
        let map = two_region_map(12, 6);
        let ta = Image::filled(12, 6, 5000u16);
        let tf = Image::filled(12, 6, 20000u16);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let scenario = full_scenario(ThermalMode::Intermediate);
        for (texture, _) in make_signature_set(&ta, &tf, &map, &scenario, 4, &mut rng).unwrap() {
            for &p in texture.pixels() {
                assert!((5000..=20000).contains(&p));
            }
        }
    }

    #[test]
    fn standby_heats_engine_not_body() {
        let map = two_region_map(16, 8);
        let ta = Image::filled(16, 8, 5000u16);
        let tf = Image::filled(16, 8, 30000u16);
        let scenario = ThermalScenario::Named("standby".into()).resolve().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (texture, config) =
            make_signature_set(&ta, &tf, &map, &scenario, 1, &mut rng).unwrap().remove(0);
        let engine = map.region_mask(ThermalRegion::Engine);
        let body = map.region_mask(ThermalRegion::Body);
        let (engine_mean, _, _) = crate::raster::masked_stats(&texture, &engine);
        let (body_mean, _, _) = crate::raster::masked_stats(&texture, &body);
        assert!(engine_mean > body_mean);
        assert_eq!(config.regions[&ThermalRegion::Engine].mode, ThermalMode::Operational);
        assert_eq!(config.regions[&ThermalRegion::Body].mode, ThermalMode::Ambient);
    }

    #[test]
    fn signature_set_distinct_configs() {
        let map = two_region_map(8, 8);
        let ta = Image::filled(8, 8, 1000u16);
        let tf = Image::filled(8, 8, 2000u16);
        let scenario = full_scenario(ThermalMode::Intermediate);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let set = make_signature_set(&ta, &tf, &map, &scenario, 4, &mut rng).unwrap();
        for i in 0..set.len() {
            for j in i + 1..set.len() {
                assert_ne!(set[i].1, set[j].1, "configs {i} and {j} identical");
            }
        }
    }

    #[test]
    fn scenario_missing_region_errors() {
        let map = two_region_map(8, 8);
        let ta = Image::filled(8, 8, 1000u16);
        let tf = Image::filled(8, 8, 2000u16);
        let mut scenario = BTreeMap::new();
        scenario.insert(ThermalRegion::Engine, ThermalMode::Ambient);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = make_signature_set(&ta, &tf, &map, &scenario, 1, &mut rng).unwrap_err();
        assert!(matches!(err, ThermalError::ScenarioMissingRegion(_)));
    }

    #[test]
    fn region_map_validation() {
        // sparse ids rejected
        let labels = Image::filled(4, 4, 2u8);
        let names = BTreeMap::from([(2u8, ThermalRegion::Body)]);
        assert!(RegionMap::new(labels, names).is_err());
        // unlabeled pixel rejected
        let mut labels = Image::filled(4, 4, 1u8);
        labels.set(0, 0, 0);
        let names = BTreeMap::from([(1u8, ThermalRegion::Body)]);
        assert!(RegionMap::new(labels, names).is_err());
    }

    #[test]
    fn scenario_json_forms() {
        let named: ThermalScenario = serde_json::from_str("\"standby\"").unwrap();
        assert_eq!(named, ThermalScenario::Named("standby".into()));
        let explicit: ThermalScenario =
            serde_json::from_str(r#"{"engine": "operational", "body": "ambient"}"#).unwrap();
        match explicit {
            ThermalScenario::Explicit(map) => {
                assert_eq!(map[&ThermalRegion::Engine], ThermalMode::Operational);
            }
            other => panic!("parsed {other:?}"),
        }
        assert!(ThermalScenario::Named("overdrive".into()).resolve().is_err());
    }
}
