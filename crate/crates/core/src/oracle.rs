//! Threshold-with-hysteresis reference controller and latency comparison of
//! two command streams.

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::data::{iso8601, SmpSeries};
use crate::encoder::CropProfile;
use crate::error::{Error, Result};
use crate::pipeline::TimedCommand;
use crate::state_machine::Action;

/// Commands of a two-threshold controller that starts closed. Opens at the
/// first reading strictly below `th_on`, closes at the first reading
/// strictly above `th_off`.
pub fn hysteresis_oracle(series: &SmpSeries, profile: &CropProfile) -> Vec<TimedCommand> {
    let mut open = false;
    let mut out = Vec::new();
    for s in &series.samples {
        if !open && s.smp_kpa < profile.th_on {
            open = true;
            out.push(TimedCommand {
                t: s.t,
                action: Action::Open,
            });
        } else if open && s.smp_kpa > profile.th_off {
            open = false;
            out.push(TimedCommand {
                t: s.t,
                action: Action::Close,
            });
        }
    }
    out
}

/// True when consecutive commands never repeat an action.
pub fn alternates(cmds: &[TimedCommand]) -> bool {
    cmds.windows(2).all(|w| w[0].action != w[1].action)
}

pub const DEFAULT_HORIZON_INTERVALS: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRow {
    pub action: Action,
    pub oracle_t: DateTime<Utc>,
    pub network_t: DateTime<Utc>,
    /// Network minus oracle, in sensor intervals.
    pub latency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub interval_s: i64,
    pub matched: Vec<MatchRow>,
    pub missed: Vec<TimedCommand>,
    pub spurious: Vec<TimedCommand>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl EvalReport {
    pub fn n_oracle(&self) -> usize {
        self.matched.len() + self.missed.len()
    }

    pub fn latencies(&self) -> Vec<f64> {
        self.matched.iter().map(|m| m.latency).collect()
    }

    /// Fraction of oracle commands matched with `|latency| <= tol`
    /// intervals; 1 when there is nothing to match.
    pub fn fraction_within(&self, tol: f64) -> f64 {
        let n = self.n_oracle();
        if n == 0 {
            return 1.0;
        }
        self.matched
            .iter()
            .filter(|m| m.latency.abs() <= tol)
            .count() as f64
            / n as f64
    }

    pub fn summary(&self) -> Option<LatencySummary> {
        summarize(&self.latencies())
    }

    /// Merge several reports that share the same interval.
    pub fn combine(reports: &[EvalReport]) -> EvalReport {
        let mut out = EvalReport {
            interval_s: reports.first().map_or(0, |r| r.interval_s),
            matched: Vec::new(),
            missed: Vec::new(),
            spurious: Vec::new(),
        };
        for r in reports {
            out.matched.extend(r.matched.iter().cloned());
            out.missed.extend(r.missed.iter().copied());
            out.spurious.extend(r.spurious.iter().copied());
        }
        out
    }

    /// One row per oracle or network command:
    /// `kind,action,oracle_t,network_t,latency_intervals`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        wr.write_record([
            "kind",
            "action",
            "oracle_t",
            "network_t",
            "latency_intervals",
        ])
        .map_err(io)?;
        for m in &self.matched {
            wr.write_record([
                "matched",
                m.action.as_str(),
                &iso8601(m.oracle_t),
                &iso8601(m.network_t),
                &m.latency.to_string(),
            ])
            .map_err(io)?;
        }
        for c in &self.missed {
            wr.write_record(["missed", c.action.as_str(), &iso8601(c.t), "", ""])
                .map_err(io)?;
        }
        for c in &self.spurious {
            wr.write_record(["spurious", c.action.as_str(), "", &iso8601(c.t), ""])
                .map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn summary_text(&self) -> String {
        let mut s = format!(
            "interval_s = {}\noracle_commands = {}\nmatched = {}\nmissed = {}\nspurious = {}\nwithin_one_interval = {:.4}\n",
            self.interval_s,
            self.n_oracle(),
            self.matched.len(),
            self.missed.len(),
            self.spurious.len(),
            self.fraction_within(1.0)
        );
        if let Some(l) = self.summary() {
            s.push_str(&format!(
                "latency_median = {}\nlatency_q1 = {}\nlatency_q3 = {}\nlatency_min = {}\nlatency_max = {}\n",
                l.median, l.q1, l.q3, l.min, l.max
            ));
        }
        s
    }

    pub fn save(&self, csv_path: &Path, summary_path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(csv_path)?))?;
        std::fs::write(summary_path, self.summary_text())?;
        Ok(())
    }
}

/// Median and quartiles with linear interpolation between order statistics.
pub fn summarize(values: &[f64]) -> Option<LatencySummary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    Some(LatencySummary {
        n: v.len(),
        median: q(0.5),
        q1: q(0.25),
        q3: q(0.75),
        min: v[0],
        max: v[v.len() - 1],
    })
}

/// Pair each oracle command, in order, with the nearest unmatched network
/// command of the same action within `horizon` intervals (earlier wins a
/// tie).
pub fn compare_commands(
    oracle: &[TimedCommand],
    network: &[TimedCommand],
    interval_s: i64,
    horizon: f64,
) -> EvalReport {
    let mut used = vec![false; network.len()];
    let mut matched = Vec::new();
    let mut missed = Vec::new();
    let interval = interval_s as f64;
    for o in oracle {
        let mut best: Option<(usize, f64)> = None;
        for (j, n) in network.iter().enumerate() {
            if used[j] || n.action != o.action {
                continue;
            }
            let lat = (n.t - o.t).num_milliseconds() as f64 / 1000.0 / interval;
            if lat.abs() > horizon {
                continue;
            }
            if best.map_or(true, |(_, b)| lat.abs() < b.abs()) {
                best = Some((j, lat));
            }
        }
        match best {
            Some((j, latency)) => {
                used[j] = true;
                matched.push(MatchRow {
                    action: o.action,
                    oracle_t: o.t,
                    network_t: network[j].t,
                    latency,
                });
            }
            None => missed.push(*o),
        }
    }
    let spurious = network
        .iter()
        .zip(&used)
        .filter(|(_, &u)| !u)
        .map(|(c, _)| *c)
        .collect();
    EvalReport {
        interval_s,
        matched,
        missed,
        spurious,
    }
}

/// Commands CSV: `t_iso8601,action`.
pub fn write_commands<W: Write>(cmds: &[TimedCommand], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    wr.write_record(["t_iso8601", "action"]).map_err(io)?;
    for c in cmds {
        wr.write_record([iso8601(c.t).as_str(), c.action.as_str()])
            .map_err(io)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn save_commands(cmds: &[TimedCommand], path: &Path) -> Result<()> {
    write_commands(cmds, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_commands(path: &Path) -> Result<Vec<TimedCommand>> {
    let data_err = |line: usize, msg: String| Error::Data {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rd = csv::Reader::from_reader(std::fs::File::open(path)?);
    let mut out: Vec<TimedCommand> = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| data_err(line, e.to_string()))?;
        if rec.len() != 2 {
            return Err(data_err(
                line,
                format!("expected 2 fields, got {}", rec.len()),
            ));
        }
        let t = DateTime::parse_from_rfc3339(&rec[0])
            .map_err(|e| data_err(line, format!("bad timestamp `{}`: {e}", &rec[0])))?
            .with_timezone(&Utc);
        let action = Action::parse(&rec[1])
            .ok_or_else(|| data_err(line, format!("unknown action `{}`", &rec[1])))?;
        if out.last().is_some_and(|p| p.t > t) {
            return Err(data_err(line, "commands must be time-ordered".into()));
        }
        out.push(TimedCommand { t, action });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};
    use proptest::prelude::*;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 7, 1, 0, 0, 0).unwrap()
    }

    fn series(values: &[f64]) -> SmpSeries {
        SmpSeries::from_values(t0(), 900, values).unwrap()
    }

    fn at(k: i64) -> DateTime<Utc> {
        t0() + Duration::seconds(900 * k)
    }

    fn actions(c: &[TimedCommand]) -> Vec<(DateTime<Utc>, Action)> {
        c.iter().map(|c| (c.t, c.action)).collect()
    }

    #[test]
    fn apple_hand_trace() {
        let cmds = hysteresis_oracle(
            &series(&[-55.0, -62.0, -58.0, -49.0]),
            &CropProfile::apple(),
        );
        assert_eq!(
            actions(&cmds),
            vec![(at(1), Action::Open), (at(3), Action::Close)]
        );
    }

    #[test]
    fn kiwi_hand_trace() {
        let cmds = hysteresis_oracle(&series(&[-13.0, -6.0, -4.0]), &CropProfile::kiwi());
        assert_eq!(
            actions(&cmds),
            vec![(at(0), Action::Open), (at(2), Action::Close)]
        );
    }

    #[test]
    fn thresholds_are_strict() {
        let cmds = hysteresis_oracle(
            &series(&[-60.0, -61.0, -50.0, -49.9]),
            &CropProfile::apple(),
        );
        assert_eq!(
            actions(&cmds),
            vec![(at(1), Action::Open), (at(3), Action::Close)]
        );
        assert!(hysteresis_oracle(&series(&[-30.0; 10]), &CropProfile::apple()).is_empty());
    }

    #[test]
    fn comparison_cases() {
        let o = vec![
            TimedCommand {
                t: at(1),
                action: Action::Open,
            },
            TimedCommand {
                t: at(5),
                action: Action::Close,
            },
        ];
        let same = compare_commands(&o, &o, 900, DEFAULT_HORIZON_INTERVALS);
        assert_eq!(same.latencies(), vec![0.0, 0.0]);
        assert!(same.missed.is_empty() && same.spurious.is_empty());

        let late = vec![
            TimedCommand {
                t: at(2),
                action: Action::Open,
            },
            TimedCommand {
                t: at(5),
                action: Action::Close,
            },
            TimedCommand {
                t: at(7),
                action: Action::Close,
            },
        ];
        let r = compare_commands(&o, &late, 900, DEFAULT_HORIZON_INTERVALS);
        assert_eq!(r.latencies(), vec![1.0, 0.0]);
        assert_eq!(r.spurious.len(), 1);
        assert_eq!(r.fraction_within(1.0), 1.0);

        let far = vec![TimedCommand {
            t: at(9),
            action: Action::Open,
        }];
        let r = compare_commands(&o[..1], &far, 900, DEFAULT_HORIZON_INTERVALS);
        assert_eq!((r.missed.len(), r.spurious.len()), (1, 1));
    }

    #[test]
    fn quartiles() {
        let s = summarize(&[0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.0, 2.0, 3.0));
        let s = summarize(&[0.0, 1.0]).unwrap();
        assert_eq!(s.median, 0.5);
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn command_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let cmds = vec![
            TimedCommand {
                t: at(1),
                action: Action::Open,
            },
            TimedCommand {
                t: at(3),
                action: Action::Close,
            },
        ];
        save_commands(&cmds, &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "t_iso8601,action\n2023-07-01T00:15:00Z,OPEN\n2023-07-01T00:45:00Z,CLOSE\n"
        );
        assert_eq!(load_commands(&p).unwrap(), cmds);
    }

    proptest! {
        #[test]
        fn oracle_alternates_and_self_compares(values in prop::collection::vec(-100.0f64..0.0, 1..200)) {
            let cmds = hysteresis_oracle(&series(&values), &CropProfile::apple());
            prop_assert!(alternates(&cmds));
            if let Some(first) = cmds.first() {
                prop_assert_eq!(first.action, Action::Open);
            }
            let r = compare_commands(&cmds, &cmds, 900, DEFAULT_HORIZON_INTERVALS);
            prop_assert!(r.missed.is_empty() && r.spurious.is_empty());
            prop_assert!(r.latencies().iter().all(|&l| l == 0.0));
        }

        #[test]
        fn band_confined_traces_are_silent(values in prop::collection::vec(-59.999f64..-50.001, 1..200)) {
            prop_assert!(hysteresis_oracle(&series(&values), &CropProfile::apple()).is_empty());
        }
    }
}
