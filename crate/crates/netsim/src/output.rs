//! Per-block CSV and propagation trace writers.

use std::io::Write;

use serde::Serialize;

use crate::engine::SimOutput;

#[derive(Serialize)]
struct Row<'a> {
    id: String,
    thread: u32,
    period: u64,
    creator: u32,
    created: f64,
    half_time: Option<f64>,
    settled: Option<f64>,
    status: &'a str,
    in_window: bool,
}

pub fn write_block_csv(out: &SimOutput, w: impl Write) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in &out.blocks {
        wr.serialize(Row {
            id: r.id.to_hex(),
            thread: r.thread,
            period: r.period,
            creator: r.creator,
            created: r.created,
            half_time: r.half_time,
            settled: r.settled,
            status: match r.status {
                blockclique_core::BlockStatus::Active => "active",
                blockclique_core::BlockStatus::Final => "final",
                blockclique_core::BlockStatus::Stale => "stale",
            },
            in_window: r.in_window,
        })?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Receipt<'a> {
    block: &'a str,
    node: u32,
    time: f64,
}

/// One JSON line per (block, node) arrival, in arrival order per block.
pub fn write_propagation_trace(out: &SimOutput, mut w: impl Write) -> std::io::Result<()> {
    for (rec, receipts) in out.blocks.iter().zip(&out.receipts) {
        let id = rec.id.to_hex();
        for &(node, time) in receipts {
            serde_json::to_writer(
                &mut w,
                &Receipt {
                    block: &id,
                    node,
                    time,
                },
            )?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}
