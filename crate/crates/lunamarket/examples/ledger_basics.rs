//! Accounts, payments, hash-linked blocks and tamper detection.

use lunamarket::ledger::{Ledger, Transaction, TxKind, MICRO_PER_CREDIT};

fn main() {
    let mut ledger = Ledger::new(1_000 * MICRO_PER_CREDIT);
    let alice = ledger.create_account(100 * MICRO_PER_CREDIT).unwrap();
    let bob = ledger.create_account(0).unwrap();
    println!("alice = {alice}");
    println!("bob   = {bob}");

    let pay = Transaction::new(
        ledger.authority_of(alice).unwrap(),
        ledger.next_nonce_for(alice).unwrap(),
        TxKind::Payment {
            from: alice,
            to: bob,
            amount: 10 * MICRO_PER_CREDIT,
        },
    );
    ledger.submit(pay).unwrap();
    let block = ledger.commit_block(1_000).unwrap();
    println!(
        "block {} committed at t={} ms with {} tx, hash {}",
        block.height,
        block.timestamp_ms,
        block.txs.len(),
        block.hash
    );
    println!(
        "alice {} credits, bob {} credits, faucet {} credits",
        ledger.balance_of(alice).unwrap() / MICRO_PER_CREDIT,
        ledger.balance_of(bob).unwrap() / MICRO_PER_CREDIT,
        ledger.faucet_remaining() / MICRO_PER_CREDIT,
    );
    println!("conservation holds: {}", ledger.conservation_holds());
    println!("chain verifies:     {}", ledger.verify_chain());

    // tamper with a committed amount and watch verification fail
    if let TxKind::Payment { amount, .. } = &mut ledger.blocks_mut()[0].txs[0].kind {
        *amount += 1;
    }
    println!("after tampering:    {}", ledger.verify_chain());
}
