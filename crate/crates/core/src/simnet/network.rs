use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LinkModel, Topology};
use crate::keys::NodeId;
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Every attempt on some hop was lost.
    Lost,
    NoRoute,
    SenderDead,
    DestinationDead,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SendOutcome {
    Scheduled { deliver_at: SimTime, hops: usize },
    Dropped(DropReason),
    Partitioned,
}

/// Message accounting. `sent = delivered + dropped + partitioned + in_flight`
/// holds at every instant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub partitioned: u64,
    pub in_flight: u64,
    /// Link-level transmissions including retransmissions, summed over hops.
    pub transmissions: u64,
    pub retransmissions: u64,
    pub bytes_on_air: u64,
    pub interference_hits: u64,
}

impl NetCounters {
    pub fn reconciles(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.partitioned + self.in_flight
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    topology: Topology,
    link: LinkModel,
    alive: Vec<bool>,
    /// Side of the active partition for each node, if any.
    partition: Option<Vec<bool>>,
    counters: NetCounters,
    /// Transmitters per interference window.
    windows: BTreeMap<u64, Vec<NodeId>>,
}

impl Network {
    pub fn new(topology: Topology, link: LinkModel) -> Self {
        let n = topology.len();
        Network { topology, link, alive: vec![true; n], partition: None, counters: NetCounters::default(), windows: BTreeMap::new() }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn link(&self) -> &LinkModel {
        &self.link
    }

    pub fn counters(&self) -> NetCounters {
        self.counters
    }

    pub fn is_alive(&self, node: NodeId) -> bool {
        self.alive[node.index()]
    }

    pub fn kill(&mut self, node: NodeId) {
        self.alive[node.index()] = false;
    }

    /// Separates `group` from the remaining nodes until cleared.
    pub fn set_partition(&mut self, group: &[NodeId]) {
        let mut side = vec![false; self.topology.len()];
        for n in group {
            side[n.index()] = true;
        }
        self.partition = Some(side);
    }

    pub fn clear_partition(&mut self) {
        self.partition = None;
    }

    pub fn partition_active(&self) -> bool {
        self.partition.is_some()
    }

    pub fn same_side(&self, a: NodeId, b: NodeId) -> bool {
        match &self.partition {
            Some(side) => side[a.index()] == side[b.index()],
            None => true,
        }
    }

    /// Routes a message over the shortest live path, retransmitting lost
    /// frames per hop up to the link's attempt limit.
    pub fn send<R: Rng>(&mut self, from: NodeId, to: NodeId, bytes: usize, now: SimTime, rng: &mut R) -> SendOutcome {
        self.counters.sent += 1;
        if !self.is_alive(from) {
            return self.drop(DropReason::SenderDead);
        }
        if !self.same_side(from, to) {
            self.counters.partitioned += 1;
            return SendOutcome::Partitioned;
        }
        if !self.is_alive(to) {
            return self.drop(DropReason::DestinationDead);
        }
        if from == to {
            self.counters.in_flight += 1;
            return SendOutcome::Scheduled { deliver_at: now, hops: 0 };
        }
        let path = {
            let alive = &self.alive;
            let partition = &self.partition;
            let side = |n: NodeId| partition.as_ref().map_or(true, |s| s[n.index()] == s[from.index()]);
            self.topology.shortest_path(from, to, |n| alive[n.index()] && side(n))
        };
        let Some(path) = path else {
            return self.drop(DropReason::NoRoute);
        };
        self.prune_windows(now);
        let mut t = now;
        for hop in path.windows(2) {
            let mut delivered = false;
            for attempt in 0..self.link.max_attempts.max(1) {
                self.counters.transmissions += 1;
                self.counters.bytes_on_air += bytes as u64;
                if attempt > 0 {
                    self.counters.retransmissions += 1;
                }
                let penalty = self.interference(hop[0], t);
                if self.link.draw_drop(rng) {
                    t = t + self.link.retransmit_timeout;
                    continue;
                }
                t = t + self.link.draw_latency(rng) + penalty;
                delivered = true;
                break;
            }
            if !delivered {
                return self.drop(DropReason::Lost);
            }
        }
        self.counters.in_flight += 1;
        SendOutcome::Scheduled { deliver_at: t, hops: path.len() - 1 }
    }

    /// Settles an in-flight message; returns whether the recipient took it.
    pub fn on_arrival(&mut self, to: NodeId) -> bool {
        self.counters.in_flight = self.counters.in_flight.saturating_sub(1);
        if self.is_alive(to) {
            self.counters.delivered += 1;
            true
        } else {
            self.counters.dropped += 1;
            false
        }
    }

    fn drop(&mut self, reason: DropReason) -> SendOutcome {
        self.counters.dropped += 1;
        SendOutcome::Dropped(reason)
    }

    fn interference(&mut self, sender: NodeId, at: SimTime) -> SimDuration {
        let width = self.link.interference_window.micros().max(1);
        let slot = self.windows.entry(at.micros() / width).or_default();
        let busy = slot.iter().filter(|&&o| self.topology.interferes(sender, o)).count();
        slot.push(sender);
        if busy > self.link.interference_threshold {
            self.counters.interference_hits += 1;
            self.link.interference_penalty
        } else {
            SimDuration::ZERO
        }
    }

    fn prune_windows(&mut self, now: SimTime) {
        let width = self.link.interference_window.micros().max(1);
        let current = now.micros() / width;
        self.windows = self.windows.split_off(&current);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::simnet::Position;

    fn line(n: usize) -> Topology {
        let positions = (0..n).map(|i| Position { x: i as f64 * 40.0, y: 0.0 }).collect();
        Topology::from_positions(positions, 500.0, 50.0, 60.0)
    }

    #[test]
    fn ideal_link_delivers_after_base_latency_per_hop() {
        let mut net = Network::new(line(3), LinkModel::ideal(SimDuration::from_millis(10)));
        let mut rng = seeded(0);
        let out = net.send(NodeId(0), NodeId(1), 10, SimTime::from_millis(5), &mut rng);
        assert_eq!(out, SendOutcome::Scheduled { deliver_at: SimTime::from_millis(15), hops: 1 });
        let out = net.send(NodeId(0), NodeId(2), 10, SimTime::ZERO, &mut rng);
        assert_eq!(out, SendOutcome::Scheduled { deliver_at: SimTime::from_millis(20), hops: 2 });
        assert!(net.on_arrival(NodeId(1)));
        assert_eq!(net.counters().in_flight, 1);
        assert!(net.counters().reconciles());
    }

    #[test]
    fn certain_loss_always_drops() {
        let link = LinkModel { drop_probability: 1.0, ..LinkModel::default() };
        let mut net = Network::new(line(2), link);
        let mut rng = seeded(0);
        for _ in 0..20 {
            let out = net.send(NodeId(0), NodeId(1), 10, SimTime::ZERO, &mut rng);
            assert_eq!(out, SendOutcome::Dropped(DropReason::Lost));
        }
        assert_eq!(net.counters().dropped, 20);
        assert!(net.counters().reconciles());
    }

    #[test]
    fn partition_and_crash_block_delivery() {
        let mut net = Network::new(line(3), LinkModel::ideal(SimDuration::from_millis(1)));
        let mut rng = seeded(0);
        net.set_partition(&[NodeId(2)]);
        assert_eq!(net.send(NodeId(0), NodeId(2), 1, SimTime::ZERO, &mut rng), SendOutcome::Partitioned);
        net.clear_partition();
        net.kill(NodeId(1));
        assert_eq!(net.send(NodeId(0), NodeId(2), 1, SimTime::ZERO, &mut rng), SendOutcome::Dropped(DropReason::NoRoute));
        assert_eq!(net.send(NodeId(1), NodeId(0), 1, SimTime::ZERO, &mut rng), SendOutcome::Dropped(DropReason::SenderDead));
        assert!(net.counters().reconciles());
    }

    #[test]
    fn arrival_at_dead_node_counts_as_drop() {
        let mut net = Network::new(line(2), LinkModel::ideal(SimDuration::from_millis(1)));
        let mut rng = seeded(0);
        net.send(NodeId(0), NodeId(1), 1, SimTime::ZERO, &mut rng);
        net.kill(NodeId(1));
        assert!(!net.on_arrival(NodeId(1)));
        let c = net.counters();
        assert_eq!((c.sent, c.dropped, c.in_flight), (1, 1, 0));
    }

    #[test]
    fn congestion_adds_penalty() {
        let mut link = LinkModel::ideal(SimDuration::from_millis(10));
        link.interference_threshold = 1;
        link.interference_penalty = SimDuration::from_millis(3);
        let mut net = Network::new(Topology::fully_connected(4), link);
        let mut rng = seeded(0);
        let at = |o| match o {
            SendOutcome::Scheduled { deliver_at, .. } => deliver_at,
            other => panic!("{other:?}"),
        };
        assert_eq!(at(net.send(NodeId(0), NodeId(3), 1, SimTime::ZERO, &mut rng)), SimTime::from_millis(10));
        assert_eq!(at(net.send(NodeId(1), NodeId(3), 1, SimTime::ZERO, &mut rng)), SimTime::from_millis(10));
        assert_eq!(at(net.send(NodeId(2), NodeId(3), 1, SimTime::ZERO, &mut rng)), SimTime::from_millis(13));
        assert_eq!(net.counters().interference_hits, 1);
    }
}
