//! Radio medium: transmissions on (channel, rate) pairs and collisions.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TxKind {
    Data,
    Ack1,
    Ack2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transmission {
    pub id: u64,
    pub kind: TxKind,
    /// Main channels are `0..F`; the downlink channel is `F`.
    pub channel: usize,
    pub rate: usize,
    pub start: f64,
    pub end: f64,
    pub mote: usize,
    pub doomed: bool,
}

/// Two transmissions collide iff they share channel and rate and overlap in
/// time with positive measure. There is no capture: both are lost.
pub fn collision_rule(a: &Transmission, b: &Transmission) -> bool {
    a.channel == b.channel && a.rate == b.rate && a.start < b.end && b.start < a.end
}

/// Transmissions currently on the air, bucketed by (channel, rate).
#[derive(Debug)]
pub struct Medium {
    n_rates: usize,
    active: Vec<Vec<Transmission>>,
    collisions: bool,
}

impl Medium {
    pub fn new(n_channels_total: usize, n_rates: usize) -> Self {
        Self {
            n_rates,
            active: vec![Vec::new(); n_channels_total * n_rates],
            collisions: true,
        }
    }

    /// Test hook: transmissions never doom each other.
    pub fn disable_collisions(&mut self) {
        self.collisions = false;
    }

    fn slot(&self, channel: usize, rate: usize) -> usize {
        channel * self.n_rates + rate
    }

    /// Puts `tx` on the air, dooming it and everything it collides with.
    /// Returns the number of transmissions it collided with.
    pub fn start(&mut self, mut tx: Transmission) -> usize {
        let slot = self.slot(tx.channel, tx.rate);
        let mut hits = 0;
        if self.collisions {
            for other in self.active[slot].iter_mut() {
                if collision_rule(other, &tx) {
                    other.doomed = true;
                    tx.doomed = true;
                    hits += 1;
                }
            }
        }
        self.active[slot].push(tx);
        hits
    }

    /// Takes `id` off the air and returns it with its final doomed flag.
    pub fn finish(&mut self, channel: usize, rate: usize, id: u64) -> Transmission {
        let slot = self.slot(channel, rate);
        let list = &mut self.active[slot];
        let pos = list
            .iter()
            .position(|t| t.id == id)
            .expect("finishing a transmission that is not on the air");
        list.swap_remove(pos)
    }

    /// Whether the gateway is in the middle of receiving a data frame on
    /// this channel and rate at `now`.
    pub fn receiving_data(&self, channel: usize, rate: usize, now: f64) -> bool {
        self.active[self.slot(channel, rate)]
            .iter()
            .any(|t| t.kind == TxKind::Data && t.start < now && now < t.end)
    }

    /// Takes everything still on the air, in slot order.
    pub fn drain(&mut self) -> Vec<Transmission> {
        self.active.iter_mut().flat_map(std::mem::take).collect()
    }

    pub fn on_air(&self) -> usize {
        self.active.iter().map(Vec::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx(id: u64, channel: usize, rate: usize, start: f64, end: f64) -> Transmission {
        Transmission {
            id,
            kind: TxKind::Data,
            channel,
            rate,
            start,
            end,
            mote: id as usize,
            doomed: false,
        }
    }

    #[test]
    fn collision_rule_examples() {
        assert!(collision_rule(
            &tx(0, 0, 0, 0.0, 2.0),
            &tx(1, 0, 0, 1.0, 3.0)
        ));
        assert!(!collision_rule(
            &tx(0, 0, 0, 0.0, 2.0),
            &tx(1, 1, 0, 0.0, 2.0)
        ));
        assert!(!collision_rule(
            &tx(0, 0, 0, 0.0, 2.0),
            &tx(1, 0, 1, 0.0, 2.0)
        ));
        // touching endpoints have zero overlap
        assert!(!collision_rule(
            &tx(0, 0, 0, 0.0, 2.0),
            &tx(1, 0, 0, 2.0, 3.0)
        ));
        // containment
        assert!(collision_rule(
            &tx(0, 0, 0, 0.0, 5.0),
            &tx(1, 0, 0, 1.0, 2.0)
        ));
    }

    #[test]
    fn start_dooms_both_sides() {
        let mut m = Medium::new(2, 2);
        assert_eq!(m.start(tx(0, 0, 0, 0.0, 2.0)), 0);
        assert_eq!(m.start(tx(1, 1, 0, 0.5, 2.5)), 0);
        assert_eq!(m.start(tx(2, 0, 0, 1.0, 3.0)), 1);
        assert!(m.finish(0, 0, 0).doomed);
        assert!(m.finish(0, 0, 2).doomed);
        assert!(!m.finish(1, 0, 1).doomed);
        assert_eq!(m.on_air(), 0);
    }

    #[test]
    fn ended_transmission_still_listed_does_not_collide() {
        let mut m = Medium::new(1, 1);
        m.start(tx(0, 0, 0, 0.0, 2.0));
        // starts exactly when the first ends, before its end event ran
        m.start(tx(1, 0, 0, 2.0, 4.0));
        assert!(!m.finish(0, 0, 0).doomed);
        assert!(!m.finish(0, 0, 1).doomed);
    }

    #[test]
    fn disabled_collisions() {
        let mut m = Medium::new(1, 1);
        m.disable_collisions();
        m.start(tx(0, 0, 0, 0.0, 2.0));
        m.start(tx(1, 0, 0, 1.0, 3.0));
        assert!(!m.finish(0, 0, 0).doomed);
    }

    #[test]
    fn receiving_data_is_strict() {
        let mut m = Medium::new(1, 1);
        m.start(tx(0, 0, 0, 1.0, 2.0));
        assert!(!m.receiving_data(0, 0, 1.0));
        assert!(m.receiving_data(0, 0, 1.5));
        assert!(!m.receiving_data(0, 0, 2.0));
    }
}
