//! The message network: Earth latency, the robot mesh, partitions and
//! crashes.

use lunamarket::digest::Digest;
use lunamarket::ledger::AccountId;
use lunamarket::marketplace::ContractId;
use lunamarket::netsim::{
    BidMsg, Destination, Envelope, Fault, LinkDefaults, Network, NodeId, NodeRole, NodeSpec,
    Payload, TopologySpec,
};

fn bid() -> Payload {
    Payload::Bid(BidMsg {
        contract_id: ContractId(1),
        bidder: AccountId(Digest::ZERO),
        price_micro: 10_000_000,
    })
}

fn main() {
    let spec = TopologySpec {
        nodes: vec![
            NodeSpec {
                id: NodeId::new("earth"),
                role: NodeRole::EarthStation,
            },
            NodeSpec {
                id: NodeId::new("rover-a"),
                role: NodeRole::Robot,
            },
            NodeSpec {
                id: NodeId::new("rover-b"),
                role: NodeRole::Robot,
            },
            NodeSpec {
                id: NodeId::new("rover-c"),
                role: NodeRole::Robot,
            },
        ],
        links: vec![],
        defaults: LinkDefaults::default(),
    };
    let mut net = Network::build(&spec, 42).unwrap();
    println!(
        "earth<->rover latency {} ms, rover<->rover {} ms",
        net.link_latency_ms(&NodeId::new("earth"), &NodeId::new("rover-a"))
            .unwrap(),
        net.link_latency_ms(&NodeId::new("rover-a"), &NodeId::new("rover-b"))
            .unwrap(),
    );

    // an Earth broadcast needs a full interplanetary traversal
    net.send(Envelope {
        src: NodeId::new("earth"),
        dst: Destination::Broadcast,
        payload: bid(),
        send_time_ms: 0,
    })
    .unwrap();
    for ev in net.step(10_000).unwrap() {
        println!("t={:>5} ms  {} -> {}", ev.deliver_at_ms, ev.src, ev.dst);
    }

    // partition a mesh link: nothing crosses until it heals
    let (a, b) = (NodeId::new("rover-a"), NodeId::new("rover-b"));
    net.inject_fault(Fault::Partition {
        a: a.clone(),
        b: b.clone(),
        partitioned: true,
    })
    .unwrap();
    net.send(Envelope {
        src: a.clone(),
        dst: Destination::Node(b.clone()),
        payload: bid(),
        send_time_ms: 10_000,
    })
    .unwrap();
    println!(
        "partitioned deliveries: {}",
        net.step(20_000).unwrap().len()
    );
    net.inject_fault(Fault::Partition {
        a: a.clone(),
        b: b.clone(),
        partitioned: false,
    })
    .unwrap();
    net.send(Envelope {
        src: a.clone(),
        dst: Destination::Node(b.clone()),
        payload: bid(),
        send_time_ms: 20_000,
    })
    .unwrap();
    println!(
        "after healing:          {}",
        net.step(30_000).unwrap().len()
    );

    // crashed nodes receive nothing
    net.inject_fault(Fault::Crash(NodeId::new("rover-c")))
        .unwrap();
    net.send(Envelope {
        src: a,
        dst: Destination::Node(NodeId::new("rover-c")),
        payload: bid(),
        send_time_ms: 30_000,
    })
    .unwrap();
    println!(
        "to a crashed rover:     {}",
        net.step(40_000).unwrap().len()
    );

    for ((x, y), stats) in net.link_stats() {
        if stats.delivered_count + stats.blocked_count > 0 {
            println!(
                "{x}<->{y}: {} delivered ({} B), {} blocked",
                stats.delivered_count, stats.delivered_bytes, stats.blocked_count
            );
        }
    }
}
