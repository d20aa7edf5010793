//! Small deterministic instances shared by tests, examples and the docs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instance::{Instance, Node, NodeId, TimeWindow};

fn node(id: NodeId, x: f64, y: f64, demand: u32) -> Node {
    Node { id, x, y, demand, window: TimeWindow::unconstrained() }
}

/// Depot (0,0) plus customers at (0,3), (4,0), (3,4): edge costs 3, 4, 5
/// between the first three nodes. Demands 4, 5, 3 under capacity 10.
pub fn four_node() -> Instance {
    four_node_with_breaks(&[])
}

/// The four-node fixture with explicit break times on selected edges.
pub fn four_node_with_breaks(breaks: &[(NodeId, NodeId, f64)]) -> Instance {
    let nodes = vec![
        node(0, 0.0, 0.0, 0),
        node(1, 0.0, 3.0, 4),
        node(2, 4.0, 0.0, 5),
        node(3, 3.0, 4.0, 3),
    ];
    let mut map = BTreeMap::new();
    for &(a, b, t) in breaks {
        map.insert(if a < b { (a, b) } else { (b, a) }, t);
    }
    Instance::new("four-node", nodes, 10, 3, 0, map).unwrap()
}

/// Depot plus two customers whose demands (6 and 7) cannot share a capacity-10
/// load, forcing two singleton routes.
pub fn forced_split() -> Instance {
    let nodes = vec![node(0, 0.0, 0.0, 0), node(1, 0.0, 3.0, 6), node(2, 4.0, 0.0, 7)];
    Instance::new("forced-split", nodes, 10, 2, 0, BTreeMap::new()).unwrap()
}

/// Depot plus a single customer at distance 3.
pub fn single_customer() -> Instance {
    let nodes = vec![node(0, 0.0, 0.0, 0), node(1, 0.0, 3.0, 4)];
    Instance::new("single-customer", nodes, 10, 2, 0, BTreeMap::new()).unwrap()
}

/// Six customers around the depot; total demand 27 under capacity 15, so a
/// complete plan needs at least two routes.
pub fn six_customers() -> Instance {
    let nodes = vec![
        node(0, 50.0, 50.0, 0),
        node(1, 20.0, 60.0, 6),
        node(2, 35.0, 20.0, 4),
        node(3, 80.0, 30.0, 5),
        node(4, 70.0, 75.0, 3),
        node(5, 40.0, 85.0, 5),
        node(6, 90.0, 60.0, 4),
    ];
    Instance::new("six-customers", nodes, 15, 3, 0, BTreeMap::new()).unwrap()
}

/// A 32-node CVRP file in the Augerat text convention (synthetic coordinates;
/// header values mirror the classic A-series layout).
pub fn augerat_style_vrp() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(3232);
    let mut out = String::new();
    out.push_str("NAME : A-n32-k5-style\n");
    out.push_str("COMMENT : synthetic coordinates in the Augerat A-series layout\n");
    out.push_str("TYPE : CVRP\n");
    out.push_str("DIMENSION : 32\n");
    out.push_str("EDGE_WEIGHT_TYPE : EUC_2D\n");
    out.push_str("CAPACITY : 100\n");
    out.push_str("NODE_COORD_SECTION\n");
    out.push_str(" 1 41 49\n");
    for id in 2..=32 {
        out.push_str(&format!(" {id} {} {}\n", rng.gen_range(0..=100), rng.gen_range(0..=100)));
    }
    out.push_str("DEMAND_SECTION\n");
    out.push_str("1 0\n");
    for id in 2..=32 {
        out.push_str(&format!("{id} {}\n", rng.gen_range(1..=25)));
    }
    out.push_str("DEPOT_SECTION\n 1\n -1\nEOF\n");
    out
}
