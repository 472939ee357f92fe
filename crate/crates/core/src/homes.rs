//! Home-city inference and per-photo activity classification.
//!
//! A user's home is the city where they took the most photos, restricted to
//! cities with at least `min_photos` photos spanning strictly more than
//! `min_span_days` days. Every photo then classifies as resident activity,
//! domestic tourism, foreign tourism, or unknown-home.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::SourceLabel;
use crate::registry::{CityId, CityRegistry};

/// A photo with its source record resolved to a registry city.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocatedPhoto {
    pub user_id: String,
    pub city_id: CityId,
    pub taken_at: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub source_label: SourceLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserCityActivity {
    pub user_id: String,
    pub city_id: CityId,
    pub photo_count: u64,
    pub first_at: DateTime<Utc>,
    pub last_at: DateTime<Utc>,
}

impl UserCityActivity {
    /// Real days between first and last photo; 0 for a single photo.
    pub fn span_days(&self) -> f64 {
        (self.last_at - self.first_at).num_seconds() as f64 / 86_400.0
    }
}

/// Eligibility thresholds for home inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomeParams {
    pub min_photos: u64,
    pub min_span_days: f64,
}

impl Default for HomeParams {
    fn default() -> Self {
        HomeParams {
            min_photos: 10,
            min_span_days: 180.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomeAssignment {
    pub user_id: String,
    pub home_city_id: Option<CityId>,
    pub home_country: Option<String>,
    pub evidence: Option<UserCityActivity>,
}

impl HomeAssignment {
    pub fn has_home(&self) -> bool {
        self.home_city_id.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityCategory {
    Resident,
    DomesticTourist,
    ForeignTourist,
    UnknownHome,
}

impl ActivityCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActivityCategory::Resident => "resident",
            ActivityCategory::DomesticTourist => "domestic_tourist",
            ActivityCategory::ForeignTourist => "foreign_tourist",
            ActivityCategory::UnknownHome => "unknown_home",
        }
    }
}

/// One summary per (user, city) with exact counts and first/last instants.
pub fn summarize_user_city_activity(
    photos: &[LocatedPhoto],
) -> BTreeMap<(String, CityId), UserCityActivity> {
    let mut out: BTreeMap<(String, CityId), UserCityActivity> = BTreeMap::new();
    for p in photos {
        let key = (p.user_id.clone(), p.city_id.clone());
        out.entry(key)
            .and_modify(|s| {
                s.photo_count += 1;
                if p.taken_at < s.first_at {
                    s.first_at = p.taken_at;
                }
                if p.taken_at > s.last_at {
                    s.last_at = p.taken_at;
                }
            })
            .or_insert_with(|| UserCityActivity {
                user_id: p.user_id.clone(),
                city_id: p.city_id.clone(),
                photo_count: 1,
                first_at: p.taken_at,
                last_at: p.taken_at,
            });
    }
    out
}

/// Pick the home among one user's city summaries: the eligible city with the
/// highest photo count, ties broken by longer span, then lexicographically
/// smaller city id. No eligible city means no home.
pub fn infer_home(
    user_id: &str,
    summaries: &[UserCityActivity],
    params: &HomeParams,
    registry: &CityRegistry,
) -> HomeAssignment {
    debug_assert!(summaries.iter().all(|s| s.user_id == user_id));
    let winner = summaries
        .iter()
        .filter(|s| s.photo_count >= params.min_photos && s.span_days() > params.min_span_days)
        .max_by(|a, b| {
            a.photo_count
                .cmp(&b.photo_count)
                .then_with(|| {
                    a.span_days()
                        .partial_cmp(&b.span_days())
                        .expect("finite spans")
                })
                .then_with(|| b.city_id.cmp(&a.city_id))
        });
    match winner {
        Some(evidence) => HomeAssignment {
            user_id: user_id.to_owned(),
            home_city_id: Some(evidence.city_id.clone()),
            home_country: registry
                .get(&evidence.city_id)
                .map(|c| c.country_code.clone()),
            evidence: Some(evidence.clone()),
        },
        None => HomeAssignment {
            user_id: user_id.to_owned(),
            home_city_id: None,
            home_country: None,
            evidence: None,
        },
    }
}

/// Infer homes for every user appearing in the summaries. Per-user work is
/// independent; the output table is ordered by user id regardless of worker
/// interleaving.
pub fn assign_homes(
    summaries: &BTreeMap<(String, CityId), UserCityActivity>,
    params: &HomeParams,
    registry: &CityRegistry,
) -> BTreeMap<String, HomeAssignment> {
    let mut by_user: BTreeMap<&str, Vec<&UserCityActivity>> = BTreeMap::new();
    for ((user_id, _), s) in summaries {
        by_user.entry(user_id).or_default().push(s);
    }
    by_user
        .into_par_iter()
        .map(|(user_id, group)| {
            let owned: Vec<UserCityActivity> = group.into_iter().cloned().collect();
            (
                user_id.to_owned(),
                infer_home(user_id, &owned, params, registry),
            )
        })
        .collect()
}

/// Classify one photo against its photographer's home assignment.
pub fn categorize_photo(
    photo_city: &CityId,
    home: &HomeAssignment,
    registry: &CityRegistry,
) -> ActivityCategory {
    let Some(home_city) = &home.home_city_id else {
        return ActivityCategory::UnknownHome;
    };
    if photo_city == home_city {
        return ActivityCategory::Resident;
    }
    let photo_country = registry.get(photo_city).map(|c| c.country_code.as_str());
    match (photo_country, home.home_country.as_deref()) {
        (Some(pc), Some(hc)) if pc == hc => ActivityCategory::DomesticTourist,
        _ => ActivityCategory::ForeignTourist,
    }
}

/// A photo paired with its activity classification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategorizedPhoto {
    pub photo: LocatedPhoto,
    pub category: ActivityCategory,
}

pub fn categorize_all(
    photos: Vec<LocatedPhoto>,
    homes: &BTreeMap<String, HomeAssignment>,
    registry: &CityRegistry,
) -> Vec<CategorizedPhoto> {
    let no_home = |user_id: &str| HomeAssignment {
        user_id: user_id.to_owned(),
        home_city_id: None,
        home_country: None,
        evidence: None,
    };
    photos
        .into_iter()
        .map(|photo| {
            let category = match homes.get(&photo.user_id) {
                Some(home) => categorize_photo(&photo.city_id, home, registry),
                None => categorize_photo(&photo.city_id, &no_home(&photo.user_id), registry),
            };
            CategorizedPhoto { photo, category }
        })
        .collect()
}

/// How often the inferred home disagrees with the dataset's own resident
/// tag. A user counts as compared when they have an inferred home and appear
/// in at least one resident-labeled file; a contradiction is any
/// resident-labeled city different from the inferred home.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub users_compared: u64,
    pub contradictions: u64,
}

impl ConsistencyReport {
    pub fn rate(&self) -> Option<f64> {
        if self.users_compared == 0 {
            None
        } else {
            Some(self.contradictions as f64 / self.users_compared as f64)
        }
    }
}

pub fn resident_label_consistency(
    photos: &[LocatedPhoto],
    homes: &BTreeMap<String, HomeAssignment>,
) -> ConsistencyReport {
    let mut labeled: BTreeMap<&str, BTreeSet<&CityId>> = BTreeMap::new();
    for p in photos {
        if p.source_label == SourceLabel::Resident {
            labeled.entry(&p.user_id).or_default().insert(&p.city_id);
        }
    }
    let mut report = ConsistencyReport::default();
    for (user_id, cities) in labeled {
        let Some(home) = homes.get(user_id).and_then(|h| h.home_city_id.as_ref()) else {
            continue;
        };
        report.users_compared += 1;
        if cities.iter().any(|c| *c != home) {
            report.contradictions += 1;
        }
    }
    report
}
