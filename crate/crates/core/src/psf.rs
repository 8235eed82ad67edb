//! Pseudo-label supervision fusion: completes every domain's labels to the
//! unified label space from thresholded fused predictions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusedPrediction;
use crate::labelspace::VOID;

/// Where a completed label came from. Stored as one byte per element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Provenance {
    GroundTruth = 0,
    Pseudo = 1,
    Void = 2,
    Relabeled = 3,
}

impl Provenance {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::GroundTruth),
            1 => Some(Self::Pseudo),
            2 => Some(Self::Void),
            3 => Some(Self::Relabeled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceCounts {
    pub ground_truth: usize,
    pub pseudo: usize,
    pub void: usize,
    pub relabeled: usize,
}

/// Completed labels of one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabels {
    pub labels: Vec<i64>,
    pub provenance: Vec<Provenance>,
    pub delta: f64,
}

impl PseudoLabels {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn counts(&self) -> ProvenanceCounts {
        let mut c = ProvenanceCounts::default();
        for p in &self.provenance {
            match p {
                Provenance::GroundTruth => c.ground_truth += 1,
                Provenance::Pseudo => c.pseudo += 1,
                Provenance::Void => c.void += 1,
                Provenance::Relabeled => c.relabeled += 1,
            }
        }
        c
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::Value(format!("threshold delta must lie in [0, 1], got {delta}")))
    }
}

fn check_len(labels: &[i64], fused: &FusedPrediction) -> Result<()> {
    if labels.len() != fused.num_elements() {
        return Err(Error::Shape(format!(
            "{} labels but {} fused elements",
            labels.len(),
            fused.num_elements()
        )));
    }
    Ok(())
}

/// Keeps source ground truth and fills void elements whose fused confidence exceeds `delta`.
pub fn complete_source(labels: &[i64], fused: &FusedPrediction, delta: f64) -> Result<PseudoLabels> {
    check_delta(delta)?;
    check_len(labels, fused)?;
    let (labels, provenance) = labels
        .iter()
        .enumerate()
        .map(|(e, &y)| {
            if y != VOID {
                (y, Provenance::GroundTruth)
            } else if fused.confidence[e] > delta {
                (fused.labels[e] as i64, Provenance::Pseudo)
            } else {
                (VOID, Provenance::Void)
            }
        })
        .unzip();
    Ok(PseudoLabels {
        labels,
        provenance,
        delta,
    })
}

/// Labels the target wherever the fused confidence exceeds `delta`.
pub fn label_target(fused: &FusedPrediction, delta: f64) -> Result<PseudoLabels> {
    check_delta(delta)?;
    let (labels, provenance) = (0..fused.num_elements())
        .map(|e| {
            if fused.confidence[e] > delta {
                (fused.labels[e] as i64, Provenance::Pseudo)
            } else {
                (VOID, Provenance::Void)
            }
        })
        .unzip();
    Ok(PseudoLabels {
        labels,
        provenance,
        delta,
    })
}

/// Moves coarse-class elements of a coarse-side domain to the fine class.
///
/// `pairs` holds `(fine_class, coarse_class)` for every conflict where this
/// domain is the coarse side. An element originally labeled `coarse_class`
/// becomes `fine_class` iff the fused argmax is `fine_class` and its
/// probability exceeds `delta`.
pub fn relabel_conflicts(
    mut entry: PseudoLabels,
    original: &[i64],
    fused: &FusedPrediction,
    pairs: &[(usize, usize)],
    delta: f64,
) -> Result<PseudoLabels> {
    check_delta(delta)?;
    check_len(original, fused)?;
    if entry.len() != original.len() {
        return Err(Error::Shape("entry and original labels differ in length".into()));
    }
    for &(fine, coarse) in pairs {
        if fine >= fused.num_classes() || coarse >= fused.num_classes() {
            return Err(Error::Conflict(format!("pair ({fine}, {coarse}) outside the label space")));
        }
        for e in 0..original.len() {
            if original[e] == coarse as i64 && fused.labels[e] == fine && fused.probs[[e, fine]] > delta {
                entry.labels[e] = fine as i64;
                entry.provenance[e] = Provenance::Relabeled;
            }
        }
    }
    Ok(entry)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    pub counts: ProvenanceCounts,
    pub delta: f64,
}

/// Contents of `summary.json` next to the per-domain archives.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PsfSummary {
    pub domains: BTreeMap<String, DomainSummary>,
}

impl PsfSummary {
    pub fn record(&mut self, domain: &str, entry: &PseudoLabels) {
        self.domains.insert(
            domain.to_string(),
            DomainSummary {
                counts: entry.counts(),
                delta: entry.delta,
            },
        );
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.json"), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("summary.json");
        let bytes = fs::read(&path).map_err(|_| Error::MissingData(path))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Writes `<domain>.labels` (little-endian `i32`, void = -1) and
/// `<domain>.prov` (one provenance code byte per element).
pub fn write_archive(dir: &Path, domain: &str, entry: &PseudoLabels) -> Result<()> {
    fs::create_dir_all(dir)?;
    let labels: Vec<u8> = entry
        .labels
        .iter()
        .flat_map(|&y| (y as i32).to_le_bytes())
        .collect();
    fs::write(dir.join(format!("{domain}.labels")), labels)?;
    let prov: Vec<u8> = entry.provenance.iter().map(|p| p.code()).collect();
    fs::write(dir.join(format!("{domain}.prov")), prov)?;
    Ok(())
}

/// Reads an archive written by [`write_archive`]. `delta` comes from the summary.
pub fn read_archive(dir: &Path, domain: &str, delta: f64) -> Result<PseudoLabels> {
    let lp = dir.join(format!("{domain}.labels"));
    let pp = dir.join(format!("{domain}.prov"));
    let lbytes = fs::read(&lp).map_err(|_| Error::MissingData(lp.clone()))?;
    let pbytes = fs::read(&pp).map_err(|_| Error::MissingData(pp.clone()))?;
    if lbytes.len() % 4 != 0 || lbytes.len() / 4 != pbytes.len() {
        return Err(Error::MalformedData {
            path: lp,
            reason: "label and provenance files disagree in length".into(),
        });
    }
    let labels = lbytes
        .chunks_exact(4)
        .map(|b| i32::from_le_bytes(b.try_into().unwrap()) as i64)
        .collect();
    let provenance = pbytes
        .iter()
        .map(|&b| {
            Provenance::from_code(b).ok_or_else(|| Error::MalformedData {
                path: pp.clone(),
                reason: format!("unknown provenance code {b}"),
            })
        })
        .collect::<Result<_>>()?;
    Ok(PseudoLabels {
        labels,
        provenance,
        delta,
    })
}
