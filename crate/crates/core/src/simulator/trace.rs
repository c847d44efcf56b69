//! Event trace output and post-hoc transmission audits.

use std::io::Write;

use super::medium::{collision_rule, Transmission, TxKind};

pub const TRACE_HEADER: &str = "time,mote,event,channel,rate";

/// Writes one trace line; channel and rate are blank for non-radio events.
pub fn write_trace_line(
    out: &mut dyn Write,
    time: f64,
    mote: usize,
    event: &str,
    radio: Option<(usize, usize)>,
) -> std::io::Result<()> {
    match radio {
        Some((channel, rate)) => writeln!(out, "{time:.9},{mote},{event},{channel},{rate}"),
        None => writeln!(out, "{time:.9},{mote},{event},,"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuditViolation {
    /// A transmission that survived overlaps another one on its channel and rate.
    SurvivorOverlaps { survivor: u64, other: u64 },
    /// A doomed transmission overlaps nothing.
    DoomedWithoutOverlap { id: u64 },
}

/// Checks finished transmissions against the collision rule: survivors must
/// overlap nothing, and every doomed transmission must overlap something.
pub fn audit_transmissions(records: &[Transmission]) -> Vec<AuditViolation> {
    let mut sorted: Vec<&Transmission> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.channel, a.rate)
            .cmp(&(b.channel, b.rate))
            .then(a.start.total_cmp(&b.start))
            .then(a.id.cmp(&b.id))
    });

    let mut violations = Vec::new();
    for group in sorted.chunk_by(|a, b| a.channel == b.channel && a.rate == b.rate) {
        // latest-ending transmission among those already passed
        let mut reach: Option<&Transmission> = None;
        for (i, tx) in group.iter().enumerate() {
            let mut overlap = reach.filter(|o| collision_rule(tx, o)).map(|o| o.id);
            if overlap.is_none() {
                // everything starting at or after tx.end cannot overlap it
                overlap = group[i + 1..]
                    .iter()
                    .take_while(|o| o.start < tx.end)
                    .find(|o| collision_rule(tx, o))
                    .map(|o| o.id);
            }
            if reach.is_none_or(|r| tx.end > r.end) {
                reach = Some(tx);
            }
            match (tx.doomed, overlap) {
                (false, Some(other)) => violations.push(AuditViolation::SurvivorOverlaps {
                    survivor: tx.id,
                    other,
                }),
                (true, None) => violations.push(AuditViolation::DoomedWithoutOverlap { id: tx.id }),
                _ => {}
            }
        }
    }
    violations
}

/// Successful data attempts that overlap a same-channel same-rate transmission.
pub fn successful_data_overlaps(records: &[Transmission]) -> usize {
    audit_transmissions(records)
        .iter()
        .filter(|v| match v {
            AuditViolation::SurvivorOverlaps { survivor, .. } => records
                .iter()
                .any(|t| t.id == *survivor && t.kind == TxKind::Data),
            AuditViolation::DoomedWithoutOverlap { .. } => false,
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx(id: u64, channel: usize, start: f64, end: f64, doomed: bool) -> Transmission {
        Transmission {
            id,
            kind: TxKind::Data,
            channel,
            rate: 0,
            start,
            end,
            mote: 0,
            doomed,
        }
    }

    #[test]
    fn clean_trace_passes() {
        let records = vec![
            tx(0, 0, 0.0, 2.0, true),
            tx(1, 0, 1.0, 3.0, true),
            tx(2, 0, 3.0, 4.0, false),
            tx(3, 1, 1.0, 3.0, false),
        ];
        assert!(audit_transmissions(&records).is_empty());
    }

    #[test]
    fn long_earlier_frame_is_found() {
        // tx 2 overlaps tx 0 but not its immediate predecessor tx 1
        let records = vec![
            tx(0, 0, 0.0, 10.0, false),
            tx(1, 0, 1.0, 2.0, true),
            tx(2, 0, 5.0, 6.0, false),
        ];
        let v = audit_transmissions(&records);
        assert!(v.contains(&AuditViolation::SurvivorOverlaps {
            survivor: 0,
            other: 1
        }));
        assert!(v.contains(&AuditViolation::SurvivorOverlaps {
            survivor: 2,
            other: 0
        }));
        assert_eq!(successful_data_overlaps(&records), 2);
    }

    #[test]
    fn doomed_without_cause_is_flagged() {
        let v = audit_transmissions(&[tx(0, 0, 0.0, 1.0, true)]);
        assert_eq!(v, vec![AuditViolation::DoomedWithoutOverlap { id: 0 }]);
    }

    #[test]
    fn trace_line_format() {
        let mut buf = Vec::new();
        write_trace_line(&mut buf, 1.5, 3, "data_start", Some((2, 5))).unwrap();
        write_trace_line(&mut buf, 2.0, 3, "delivered", None).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "1.500000000,3,data_start,2,5\n2.000000000,3,delivered,,\n"
        );
    }
}
