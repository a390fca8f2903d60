//! Content addressing: put/get round trips, dedup, and tamper detection.

use lunamarket::contentstore::{Blob, ContentStore};

fn main() {
    let mut store = ContentStore::in_memory();

    let map_tile = Blob::new(b"pretend this is a 4.7 MB occupancy grid".to_vec());
    let hash = store.put(&map_tile).unwrap();
    println!("stored {} bytes under {hash}", map_tile.size_bytes());

    // re-putting identical bytes yields the same address
    let again = store.put(&map_tile).unwrap();
    println!("idempotent: {}", hash == again);

    let fetched = store.get(hash).unwrap();
    println!("round trip: {}", fetched == map_tile);
    println!("verifies:   {}", store.verify(hash));

    // flip a single bit in storage; the key no longer matches
    store.corrupt_bit(hash, 100);
    println!("after a one-bit flip:");
    println!("  verifies: {}", store.verify(hash));
    match store.get(hash) {
        Err(e) => println!("  get: {e}"),
        Ok(_) => unreachable!("corruption must be detected"),
    }
}
