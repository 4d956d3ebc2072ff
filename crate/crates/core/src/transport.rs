//! In-process mailbox standing in for the network. Payloads are keyed by
//! `(sender, round)`; every read is logged and reads from non-neighbors are
//! refused.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::topology::NetworkGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub receiver: usize,
    pub sender: usize,
    pub round: usize,
}

#[derive(Debug)]
pub struct Mailbox<'g> {
    graph: &'g NetworkGraph,
    payloads: BTreeMap<(usize, usize), DVector<f64>>,
    published: usize,
    log: Vec<Access>,
}

impl<'g> Mailbox<'g> {
    pub fn new(graph: &'g NetworkGraph) -> Self {
        Self {
            graph,
            payloads: BTreeMap::new(),
            published: 0,
            log: Vec::new(),
        }
    }

    pub fn publish(&mut self, sender: usize, round: usize, payload: DVector<f64>) {
        self.published += 1;
        self.payloads.insert((sender, round), payload);
    }

    pub fn receive(&mut self, receiver: usize, sender: usize, round: usize) -> Result<&DVector<f64>> {
        if !self.graph.neighbors(receiver).contains(&sender) {
            return Err(Error::NotNeighbor {
                receiver,
                sender,
                round,
            });
        }
        self.log.push(Access {
            receiver,
            sender,
            round,
        });
        self.payloads
            .get(&(sender, round))
            .ok_or_else(|| Error::ShapeMismatch(format!("no payload from node {sender} in round {round}")))
    }

    /// Drops payloads older than `round`; the engine only reads the current round.
    pub fn retire_before(&mut self, round: usize) {
        self.payloads.retain(|&(_, r), _| r >= round);
    }

    pub fn published_count(&self) -> usize {
        self.published
    }

    pub fn access_log(&self) -> &[Access] {
        &self.log
    }

    pub fn into_access_log(self) -> Vec<Access> {
        self.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::path_graph;
    use nalgebra::dvector;

    #[test]
    fn refuses_non_neighbors() {
        let g = path_graph(3).unwrap();
        let mut mb = Mailbox::new(&g);
        mb.publish(3, 0, dvector![1.0]);
        assert!(matches!(
            mb.receive(1, 3, 0),
            Err(Error::NotNeighbor {
                receiver: 1,
                sender: 3,
                round: 0
            })
        ));
        assert_eq!(mb.receive(2, 3, 0).unwrap(), &dvector![1.0]);
        assert_eq!(mb.access_log().len(), 1);
        assert!(mb.receive(2, 1, 0).is_err());
    }
}
