//! Cross-session statistics for `analyze stats`.

use std::collections::BTreeMap;

use serde::Serialize;

use super::SessionLog;
use crate::analysis::{anova_oneway, ms_score, pearson, Anova};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub participants: Vec<String>,
    /// Mean MS score per participant, in `participants` order.
    pub mean_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionStats {
    pub conditions: Vec<ConditionSummary>,
    /// Mean MS score compared across sessions, one session per condition.
    pub anova: Option<Anova>,
    pub anova_note: Option<String>,
    /// Each report's score against the road bend magnitude on screen when it
    /// was filed.
    pub score_vs_bend_r: Option<f64>,
    pub score_vs_bend_n: usize,
    pub score_vs_bend_note: Option<String>,
}

fn summarize(log: &SessionLog) -> Result<ConditionSummary> {
    let mut per: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in &log.reports {
        let e = per.entry(r.participant.as_str()).or_insert((0.0, 0));
        e.0 += ms_score(r)?;
        e.1 += 1;
    }
    Ok(ConditionSummary {
        participants: per.keys().map(|p| p.to_string()).collect(),
        mean_scores: per.values().map(|(sum, n)| sum / *n as f64).collect(),
    })
}

/// Bend magnitude of the last frame shown at or before `t`.
fn bend_at(log: &SessionLog, t: f64) -> Option<f64> {
    let idx = log.frames.partition_point(|f| f.t <= t);
    idx.checked_sub(1).map(|i| log.frames[i].bend_g.abs())
}

pub fn condition_stats(sessions: &[SessionLog]) -> Result<ConditionStats> {
    let conditions = sessions.iter().map(summarize).collect::<Result<Vec<_>>>()?;
    let groups: Vec<Vec<f64>> = conditions.iter().map(|c| c.mean_scores.clone()).collect();
    let (anova, anova_note) = match anova_oneway(&groups) {
        Ok(a) => (Some(a), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let mut scores = Vec::new();
    let mut bends = Vec::new();
    for log in sessions {
        for r in &log.reports {
            if let Some(b) = bend_at(log, r.t) {
                scores.push(ms_score(r)?);
                bends.push(b);
            }
        }
    }
    let (r, note) = match pearson(&scores, &bends) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ConditionStats {
        conditions,
        anova,
        anova_note,
        score_vs_bend_r: r,
        score_vs_bend_n: scores.len(),
        score_vs_bend_note: note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::MsReport;
    use crate::geometry::CameraMode;
    use crate::session::{Config, FramePacket, SessionHeader};

    fn log(reports: &[(&str, u8, f64)], bends: &[f64]) -> SessionLog {
        let mut l = SessionLog::new(SessionHeader::new(Config::default(), String::new(), None));
        l.frames = bends
            .iter()
            .enumerate()
            .map(|(i, &bend_g)| FramePacket {
                seq: i as u64,
                t: i as f64,
                scene_speed: 0.0,
                scene_accel: 0.0,
                bend_g,
                control_points: vec![],
                prompt_on: false,
                brake_light: false,
                camera_mode: CameraMode::ThirdPerson,
            })
            .collect();
        l.reports = reports
            .iter()
            .map(|&(p, eye, t)| MsReport { t, lat: None, lon: None, eye, head: 0, stomach: 0, participant: p.into() })
            .collect();
        l
    }

    #[test]
    fn groups_by_session_and_participant() {
        let a = log(&[("p1", 1, 0.0), ("p1", 3, 1.0), ("p2", 1, 2.0)], &[0.0, 0.1, 0.2]);
        let b = log(&[("p1", 4, 0.0), ("p2", 5, 1.5)], &[0.0, 0.2, 0.3]);
        let s = condition_stats(&[a, b]).unwrap();
        assert_eq!(s.conditions[0].participants, vec!["p1", "p2"]);
        assert_eq!(s.conditions[0].mean_scores, vec![7.48, 3.74]);
        let anova = s.anova.unwrap();
        assert_eq!((anova.df_between, anova.df_within), (1, 2));
        assert_eq!(s.score_vs_bend_n, 5);
        assert!(s.score_vs_bend_r.is_some());
    }

    #[test]
    fn degenerate_inputs_are_notes() {
        let a = log(&[("p1", 1, 0.0)], &[0.0]);
        let s = condition_stats(&[a]).unwrap();
        assert!(s.anova.is_none() && s.anova_note.is_some());
        assert!(s.score_vs_bend_r.is_none() && s.score_vs_bend_note.is_some());
    }
}
