//! Score vectors with rank labels, shared by both ranking algorithms.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores closer than this, relative to the largest magnitude, count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// Rank labels 1..=n, highest score first. Scores tied within [`TIE_TOL`] are
/// ordered by code, so round-off between symmetric entities never decides
/// their order.
pub fn rank_desc(scores: &[f64], codes: &[String]) -> Vec<usize> {
    let scale = scores.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| codes[a].cmp(&codes[b])));
    let mut start = 0;
    for i in 1..=order.len() {
        let split = i == order.len() || scores[order[i - 1]] - scores[order[i]] > TIE_TOL * scale;
        if split {
            order[start..i].sort_by(|&a, &b| codes[a].cmp(&codes[b]));
            start = i;
        }
    }
    let mut ranks = vec![0; scores.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

/// Metadata attached to a ranking.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankingMeta {
    pub algorithm: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standardization: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntity {
    pub entity: String,
    pub score: f64,
    pub rank: usize,
}

/// Per-entity scores and rank labels plus algorithm metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub meta: RankingMeta,
    pub entities: Vec<String>,
    pub scores: Vec<f64>,
    pub ranks: Vec<usize>,
}

impl RankingResult {
    pub fn new(meta: RankingMeta, entities: Vec<String>, scores: Vec<f64>) -> Self {
        let ranks = rank_desc(&scores, &entities);
        Self {
            meta,
            entities,
            scores,
            ranks,
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn rank_of(&self, entity: &str) -> Option<usize> {
        self.entities
            .iter()
            .position(|e| e == entity)
            .map(|i| self.ranks[i])
    }

    /// Entries sorted by rank.
    pub fn sorted(&self) -> Vec<RankedEntity> {
        let mut rows: Vec<RankedEntity> = self
            .entities
            .iter()
            .zip(&self.scores)
            .zip(&self.ranks)
            .map(|((e, &s), &r)| RankedEntity {
                entity: e.clone(),
                score: s,
                rank: r,
            })
            .collect();
        rows.sort_by_key(|r| r.rank);
        rows
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "entity,score,rank")?;
        for r in self.sorted() {
            writeln!(out, "{},{},{}", r.entity, r.score, r.rank)?;
        }
        Ok(())
    }

    /// Reads `entity,score,rank` rows; ranks are taken from the file.
    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(source);
        let headers = rdr.headers().map_err(|e| Error::MalformedRecord {
            line: 1,
            reason: e.to_string(),
        })?;
        if headers.iter().collect::<Vec<_>>() != ["entity", "score", "rank"] {
            return Err(Error::MalformedRecord {
                line: 1,
                reason: "expected header `entity,score,rank`".into(),
            });
        }
        let mut entities = Vec::new();
        let mut scores = Vec::new();
        let mut ranks = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::MalformedRecord {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |what: &str| Error::MalformedRecord {
                line,
                reason: format!("invalid {what}"),
            };
            if rec.len() != 3 {
                return Err(bad("column count"));
            }
            entities.push(rec[0].to_string());
            scores.push(rec[1].parse::<f64>().map_err(|_| bad("score"))?);
            ranks.push(rec[2].parse::<usize>().map_err(|_| bad("rank"))?);
        }
        if entities.is_empty() {
            return Err(Error::EmptyInput("ranking CSV has no rows".into()));
        }
        Ok(Self {
            meta: RankingMeta::default(),
            entities,
            scores,
            ranks,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": 1,
            "meta": self.meta,
            "ranking": self.sorted(),
        })
    }
}
