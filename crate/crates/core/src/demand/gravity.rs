//! Gravity-model demand synthesis.
//!
//! Consumer `j` receives a share of every provider's volume proportional to
//! its mass. Provider locations are drawn without replacement from the
//! peering-point routers; background OD demand uses the product of origin and
//! destination masses.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{scale_diurnal, ContentDemandMatrix, ContentProvider, DemandBin, DemandError, ProviderId};
use crate::topology::{NetworkTopology, NodeId};

/// Share of the total volume and number of server locations of one provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpProfile {
    pub share: f64,
    pub locations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiurnalParams {
    pub bins_per_day: usize,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GravityParams {
    /// Per-node weights; uniform when absent.
    #[serde(default)]
    pub masses: Option<Vec<f64>>,
    pub total_volume: f64,
    /// Explicit provider profiles; [`default_cp_profiles`] when absent.
    #[serde(default)]
    pub profiles: Option<Vec<CpProfile>>,
    /// Number of providers for the default profile.
    #[serde(default = "default_provider_count")]
    pub providers: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_bin_minutes")]
    pub bin_minutes: f64,
    /// Each volume is multiplied by a uniform draw from `[1 - jitter, 1 + jitter]`.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub diurnal: Option<DiurnalParams>,
    #[serde(default)]
    pub seed: u64,
}

fn default_provider_count() -> usize {
    100
}

fn default_bins() -> usize {
    1
}

fn default_bin_minutes() -> f64 {
    super::DEFAULT_BIN_MINUTES
}

impl GravityParams {
    pub fn new(total_volume: f64, seed: u64) -> Self {
        Self {
            masses: None,
            total_volume,
            profiles: None,
            providers: default_provider_count(),
            bins: default_bins(),
            bin_minutes: default_bin_minutes(),
            jitter: 0.0,
            diurnal: None,
            seed,
        }
    }

    pub fn resolved_profiles(&self, topo: &NetworkTopology) -> Vec<CpProfile> {
        self.profiles.clone().unwrap_or_else(|| default_cp_profiles(self.providers, topo.peering_points().len()))
    }
}

/// Cumulative volume share of the top-`rank` providers: 15% for the largest,
/// 40% for the top 10 and 70% for the top 100, on a curve quadratic in
/// log10(rank) so per-provider shares keep decreasing. Capped at 95%.
fn cumulative_share(rank: usize) -> f64 {
    if rank == 0 {
        return 0.0;
    }
    let x = (rank as f64).log10();
    (0.15 + 0.225 * x + 0.025 * x * x).min(0.95)
}

/// Default provider profiles for `count` providers, ranked by volume.
///
/// Providers covering the first half of the volume get 8 locations, up to
/// 60% get 4, up to 65% get 2 and the tail 1; all capped by the number of
/// peering points.
pub fn default_cp_profiles(count: usize, peering_points: usize) -> Vec<CpProfile> {
    (1..=count)
        .map(|rank| {
            let before = cumulative_share(rank - 1);
            let wanted = if before < 0.50 {
                8
            } else if before < 0.60 {
                4
            } else if before < 0.65 {
                2
            } else {
                1
            };
            CpProfile { share: cumulative_share(rank) - before, locations: wanted.min(peering_points).max(1) }
        })
        .collect()
}

/// Smooth day curve between `min` (at bin 0) and `max` (half a day later).
pub fn diurnal_profile(bins: usize, bins_per_day: usize, min: f64, max: f64) -> Vec<f64> {
    let period = bins_per_day.max(1) as f64;
    (0..bins)
        .map(|t| {
            let phase = 2.0 * std::f64::consts::PI * t as f64 / period;
            min + (max - min) * (1.0 - phase.cos()) / 2.0
        })
        .collect()
}

fn check(ok: bool, message: impl FnOnce() -> String) -> Result<(), DemandError> {
    if ok {
        Ok(())
    } else {
        Err(DemandError::InvalidParameter(message()))
    }
}

pub fn generate_gravity_demands(
    topo: &NetworkTopology,
    params: &GravityParams,
) -> Result<ContentDemandMatrix, DemandError> {
    let n = topo.node_count();
    let masses = params.masses.clone().unwrap_or_else(|| vec![1.0; n]);
    check(masses.len() == n, || format!("expected {n} masses, got {}", masses.len()))?;
    check(masses.iter().all(|m| *m >= 0.0 && m.is_finite()), || "masses must be nonnegative".into())?;
    let mass_sum: f64 = masses.iter().sum();
    check(mass_sum > 0.0, || "masses must not all be zero".into())?;
    check(params.total_volume >= 0.0 && params.total_volume.is_finite(), || {
        format!("total volume must be nonnegative, got {}", params.total_volume)
    })?;
    check((0.0..1.0).contains(&params.jitter), || format!("jitter must be in [0, 1), got {}", params.jitter))?;
    check(params.bins >= 1, || "at least one bin is required".into())?;

    let profiles = params.resolved_profiles(topo);
    check(profiles.iter().all(|p| p.share >= 0.0 && p.share.is_finite()), || "shares must be nonnegative".into())?;
    let share_sum: f64 = profiles.iter().map(|p| p.share).sum();
    check(share_sum <= 1.0 + 1e-12, || format!("shares sum to {share_sum} > 1"))?;
    let background_share = (1.0 - share_sum).max(0.0);

    let peering = topo.peering_points();
    let mut location_rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut providers = Vec::with_capacity(profiles.len());
    for (rank, profile) in profiles.iter().enumerate() {
        let id = ProviderId(rank as u32);
        if profile.locations == 0 || profile.locations > peering.len() {
            return Err(DemandError::NotEnoughPeeringPoints {
                provider: id,
                requested: profile.locations,
                available: peering.len(),
            });
        }
        let mut locations: Vec<NodeId> =
            sample(&mut location_rng, peering.len(), profile.locations).into_iter().map(|i| peering[i]).collect();
        locations.sort();
        providers.push(ContentProvider {
            id,
            name: format!("cp{rank}"),
            locations_by_bin: vec![locations; params.bins],
        });
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut noise = || {
        if params.jitter > 0.0 {
            1.0 + params.jitter * (2.0 * noise_rng.gen::<f64>() - 1.0)
        } else {
            1.0
        }
    };

    let od_weight: f64 = (0..n)
        .flat_map(|o| (0..n).filter(move |&d| d != o).map(move |d| (o, d)))
        .map(|(o, d)| masses[o] * masses[d])
        .sum();

    let mut bins = Vec::with_capacity(params.bins);
    for _ in 0..params.bins {
        let mut content = BTreeMap::new();
        for (rank, profile) in profiles.iter().enumerate() {
            for (j, &mass) in masses.iter().enumerate() {
                let volume = params.total_volume * profile.share * mass / mass_sum * noise();
                if volume > 0.0 {
                    content.insert((ProviderId(rank as u32), NodeId(j)), volume);
                }
            }
        }
        let mut background = BTreeMap::new();
        if background_share > 0.0 && od_weight > 0.0 {
            for o in 0..n {
                for d in (0..n).filter(|&d| d != o) {
                    let volume = params.total_volume * background_share * masses[o] * masses[d] / od_weight * noise();
                    if volume > 0.0 {
                        background.insert((NodeId(o), NodeId(d)), volume);
                    }
                }
            }
        }
        bins.push(DemandBin { content, background });
    }

    let matrix = ContentDemandMatrix::new(params.bin_minutes, providers, bins, topo)?;
    match params.diurnal {
        Some(d) => {
            check(d.min >= 0.0 && d.max >= d.min, || "diurnal range must satisfy 0 <= min <= max".into())?;
            scale_diurnal(&matrix, &diurnal_profile(params.bins, d.bins_per_day, d.min, d.max))
        }
        None => Ok(matrix),
    }
}
