//! Delivery network and scenario generation.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;

pub type LocationId = usize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub name: String,
    pub population: u64,
}

/// Locations, populations and the directed travel-time matrix (seconds).
#[derive(Clone, Debug, PartialEq)]
pub struct WorldNetwork {
    locations: Vec<Location>,
    eta_s: Vec<u64>,
    fuel_factor: f64,
}

#[derive(Serialize, Deserialize)]
struct WorldFile {
    locations: Vec<Location>,
    eta_seconds: Vec<Vec<u64>>,
    #[serde(default = "default_fuel_factor")]
    fuel_factor: f64,
}

fn default_fuel_factor() -> f64 {
    1.0
}

impl WorldNetwork {
    pub fn new(locations: Vec<Location>, eta_seconds: Vec<Vec<u64>>, fuel_factor: f64) -> Result<Self> {
        let n = locations.len();
        if n == 0 {
            return Err(Error::Config("world has no locations".into()));
        }
        if eta_seconds.len() != n || eta_seconds.iter().any(|row| row.len() != n) {
            return Err(Error::Config(format!("eta matrix must be {n}x{n}")));
        }
        for (i, loc) in locations.iter().enumerate() {
            if loc.population == 0 {
                return Err(Error::Config(format!("location {i} ({}) has zero population", loc.name)));
            }
        }
        for (i, row) in eta_seconds.iter().enumerate() {
            for (j, &t) in row.iter().enumerate() {
                if i == j && t != 0 {
                    return Err(Error::Config(format!("eta[{i}][{i}] must be 0")));
                }
                if i != j && t == 0 {
                    return Err(Error::Config(format!("eta[{i}][{j}] must be positive")));
                }
            }
        }
        if !(fuel_factor >= 0.0) || !fuel_factor.is_finite() {
            return Err(Error::Config("fuel_factor must be a finite nonnegative number".into()));
        }
        Ok(Self {
            locations,
            eta_s: eta_seconds.into_iter().flatten().collect(),
            fuel_factor,
        })
    }

    /// Convenience constructor with generated names.
    pub fn from_parts(populations: &[u64], eta_seconds: Vec<Vec<u64>>, fuel_factor: f64) -> Result<Self> {
        let locations = populations
            .iter()
            .enumerate()
            .map(|(i, &p)| Location { name: format!("L{i}"), population: p })
            .collect();
        Self::new(locations, eta_seconds, fuel_factor)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let f: WorldFile = serde_json::from_str(text)?;
        Self::new(f.locations, f.eta_seconds, f.fuel_factor)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        let f = WorldFile {
            locations: self.locations.clone(),
            eta_seconds: self.eta_rows(),
            fuel_factor: self.fuel_factor,
        };
        serde_json::to_string_pretty(&f).expect("world serializes")
    }

    pub fn num_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn population(&self, i: LocationId) -> u64 {
        self.locations[i].population
    }

    pub fn eta(&self, from: LocationId, to: LocationId) -> u64 {
        self.eta_s[from * self.num_locations() + to]
    }

    pub fn eta_rows(&self) -> Vec<Vec<u64>> {
        self.eta_s.chunks(self.num_locations()).map(|r| r.to_vec()).collect()
    }

    pub fn fuel_factor(&self) -> f64 {
        self.fuel_factor
    }

    pub fn contains(&self, i: LocationId) -> bool {
        i < self.num_locations()
    }

    /// Source distribution: proportional to population.
    pub fn source_probabilities(&self) -> Vec<f64> {
        let total: f64 = self.locations.iter().map(|l| l.population as f64).sum();
        self.locations.iter().map(|l| l.population as f64 / total).collect()
    }

    /// Destination distribution given `source`: proportional to
    /// `pop_j / sqrt(eta[source][j])`, with the source itself excluded.
    pub fn destination_probabilities(&self, source: LocationId) -> Vec<f64> {
        let w = self.destination_weights(source);
        let norm: f64 = w.iter().sum();
        if norm > 0.0 {
            w.iter().map(|x| x / norm).collect()
        } else {
            w
        }
    }

    fn destination_weights(&self, source: LocationId) -> Vec<f64> {
        (0..self.num_locations())
            .map(|j| {
                if j == source {
                    0.0
                } else {
                    self.population(j) as f64 / (self.eta(source, j) as f64).sqrt()
                }
            })
            .collect()
    }

    /// Ten synthetic distribution centres with plausible populations and a
    /// symmetric road-time matrix between 1 h and 20 h. Not real data.
    pub fn sample() -> Self {
        // Synthetic planar coordinates (km) and populations.
        const SITES: [(&str, f64, f64, u64); 10] = [
            ("synthetic-north-hub", 0.0, 900.0, 410_000),
            ("synthetic-lake-port", 150.0, 760.0, 265_000),
            ("synthetic-river-junction", 420.0, 820.0, 180_000),
            ("synthetic-capital", 300.0, 560.0, 520_000),
            ("synthetic-coastal-east", 620.0, 600.0, 350_000),
            ("synthetic-valley", 180.0, 380.0, 140_000),
            ("synthetic-midland", 460.0, 330.0, 230_000),
            ("synthetic-harbor", 720.0, 260.0, 300_000),
            ("synthetic-southgate", 260.0, 90.0, 195_000),
            ("synthetic-bayside", 560.0, 0.0, 275_000),
        ];
        let n = SITES.len();
        let mut eta = vec![vec![0u64; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let (_, xi, yi, _) = SITES[i];
                    let (_, xj, yj, _) = SITES[j];
                    // 1.25 road factor, 80 km/h average, clamped into [1 h, 20 h].
                    let hours = ((xi - xj).hypot(yi - yj) * 1.25 / 80.0).clamp(1.0, 20.0);
                    eta[i][j] = (hours * 3600.0).round() as u64;
                }
            }
        }
        let locations = SITES
            .iter()
            .map(|&(name, _, _, pop)| Location { name: name.into(), population: pop })
            .collect();
        Self::new(locations, eta, 1.0).expect("sample world is valid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Request {
    pub id: usize,
    pub source: LocationId,
    pub destination: LocationId,
    pub size: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruckSpec {
    pub id: usize,
    pub initial_location: LocationId,
    pub capacity: u64,
}

pub const DEFAULT_TRUCK_CAPACITY: u64 = 30_000;
pub const MAX_REQUEST_SIZE: u64 = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub num_trucks: usize,
    pub num_requests: usize,
    pub episode_time_limit_s: u64,
    pub episodes_per_cycle: usize,
    pub epochs_per_episode: usize,
    pub truck_capacity: u64,
    pub rng_seed: u64,
    /// Reward per matched request.
    pub beta_served: f64,
    /// Reward weight of the fleet-average fuel term (subtracted).
    pub beta_fuel: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_trucks: 20,
            num_requests: 40_000,
            episode_time_limit_s: 172_800,
            episodes_per_cycle: 7,
            epochs_per_episode: 10,
            truck_capacity: DEFAULT_TRUCK_CAPACITY,
            rng_seed: 0,
            beta_served: 0.004,
            beta_fuel: 0.5,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_trucks == 0 {
            return Err(Error::Config("num_trucks must be positive".into()));
        }
        if self.episode_time_limit_s == 0 {
            return Err(Error::Config("episode_time_limit_s must be positive".into()));
        }
        if self.episodes_per_cycle == 0 || self.epochs_per_episode == 0 {
            return Err(Error::Config("episodes_per_cycle and epochs_per_episode must be positive".into()));
        }
        if self.truck_capacity == 0 {
            return Err(Error::Config("truck_capacity must be positive".into()));
        }
        if !self.beta_served.is_finite() || !self.beta_fuel.is_finite() {
            return Err(Error::Config("reward weights must be finite".into()));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

pub fn sample_source(net: &WorldNetwork, rng: &mut Rng) -> LocationId {
    let weights: Vec<f64> = net.locations.iter().map(|l| l.population as f64).collect();
    rng.categorical(&weights).expect("populations are positive")
}

/// Draws a destination different from `source`. A single-location world
/// has no valid destination and returns `source`.
pub fn sample_destination(net: &WorldNetwork, source: LocationId, rng: &mut Rng) -> LocationId {
    rng.categorical(&net.destination_weights(source)).unwrap_or(source)
}

pub fn generate_requests(net: &WorldNetwork, cfg: &ScenarioConfig, rng: &mut Rng) -> Vec<Request> {
    if net.num_locations() < 2 {
        return Vec::new();
    }
    (0..cfg.num_requests)
        .map(|id| {
            let source = sample_source(net, rng);
            let destination = sample_destination(net, source, rng);
            let size = rng.range_inclusive(1, MAX_REQUEST_SIZE);
            Request { id, source, destination, size }
        })
        .collect()
}

pub fn generate_fleet(net: &WorldNetwork, cfg: &ScenarioConfig, rng: &mut Rng) -> Vec<TruckSpec> {
    (0..cfg.num_trucks)
        .map(|id| TruckSpec {
            id,
            initial_location: sample_source(net, rng),
            capacity: cfg.truck_capacity,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize, eta: u64) -> WorldNetwork {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0 } else { eta }).collect())
            .collect();
        WorldNetwork::from_parts(&vec![100; n], rows, 1.0).unwrap()
    }

    #[test]
    fn source_probabilities_follow_population() {
        let net = WorldNetwork::from_parts(&[3, 1], vec![vec![0, 10], vec![10, 0]], 1.0).unwrap();
        let p = net.source_probabilities();
        assert_eq!(p, vec![0.75, 0.25]);
        let eq = uniform(10, 3600).source_probabilities();
        assert!(eq.iter().all(|&x| (x - 0.1).abs() < 1e-15));
    }

    #[test]
    fn destination_probabilities_inverse_sqrt_eta() {
        let net = WorldNetwork::from_parts(
            &[1, 1, 1],
            vec![vec![0, 3600, 14400], vec![3600, 0, 3600], vec![14400, 3600, 0]],
            1.0,
        )
        .unwrap();
        let p = net.destination_probabilities(0);
        assert_eq!(p[0], 0.0);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[2] - 1.0 / 3.0).abs() < 1e-12);

        let two = uniform(2, 100);
        let mut rng = Rng::new(0);
        for _ in 0..100 {
            assert_eq!(sample_destination(&two, 0, &mut rng), 1);
        }
    }

    #[test]
    fn destination_distribution_sums_to_one() {
        let net = WorldNetwork::sample();
        for s in 0..net.num_locations() {
            let total: f64 = net.destination_probabilities(s).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let net = WorldNetwork::sample();
        let cfg = ScenarioConfig { num_requests: 500, ..Default::default() };
        let a = generate_requests(&net, &cfg, &mut Rng::new(9));
        let b = generate_requests(&net, &cfg, &mut Rng::new(9));
        assert_eq!(a, b);
        assert_eq!(
            generate_fleet(&net, &cfg, &mut Rng::new(9)),
            generate_fleet(&net, &cfg, &mut Rng::new(9))
        );
        assert!(a.iter().enumerate().all(|(i, r)| r.id == i));
    }

    #[test]
    fn zero_requests_is_empty() {
        let cfg = ScenarioConfig { num_requests: 0, ..Default::default() };
        assert!(generate_requests(&WorldNetwork::sample(), &cfg, &mut Rng::new(1)).is_empty());
    }

    #[test]
    fn single_location_fleet() {
        let net = WorldNetwork::from_parts(&[5], vec![vec![0]], 1.0).unwrap();
        let cfg = ScenarioConfig { num_trucks: 1, ..Default::default() };
        let fleet = generate_fleet(&net, &cfg, &mut Rng::new(2));
        assert_eq!(fleet, vec![TruckSpec { id: 0, initial_location: 0, capacity: 30_000 }]);
    }

    #[test]
    fn invalid_worlds_rejected() {
        assert!(WorldNetwork::from_parts(&[1, 0], vec![vec![0, 1], vec![1, 0]], 1.0).is_err());
        assert!(WorldNetwork::from_parts(&[1, 1], vec![vec![0, 0], vec![1, 0]], 1.0).is_err());
        assert!(WorldNetwork::from_parts(&[1, 1], vec![vec![5, 1], vec![1, 0]], 1.0).is_err());
        assert!(WorldNetwork::from_parts(&[1, 1], vec![vec![0, 1]], 1.0).is_err());
    }

    #[test]
    fn world_json_round_trip() {
        let net = WorldNetwork::sample();
        let back = WorldNetwork::from_json_str(&net.to_json_string()).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn sample_world_eta_bounds() {
        let net = WorldNetwork::sample();
        for i in 0..10 {
            for j in 0..10 {
                if i != j {
                    let t = net.eta(i, j);
                    assert!((3600..=72_000).contains(&t));
                    assert_eq!(t, net.eta(j, i));
                }
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn generated_requests_are_well_formed(seed in proptest::prelude::any::<u64>()) {
            let net = WorldNetwork::sample();
            let cfg = ScenarioConfig { num_requests: 200, ..Default::default() };
            for r in generate_requests(&net, &cfg, &mut Rng::new(seed)) {
                proptest::prop_assert!(r.source != r.destination);
                proptest::prop_assert!((1..=30).contains(&r.size));
            }
        }
    }
}
