use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::num::ByteSize;

use super::epoch::MetaBlock;
use super::summary::SummaryBlock;
use super::LedgerError;

/// Sidechain storage: meta-blocks until their epoch's sync is confirmed,
/// summaries forever.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideChain {
    pub meta: BTreeMap<u64, Vec<MetaBlock>>,
    pub summaries: BTreeMap<u64, SummaryBlock>,
    /// Last epoch whose sync is confirmed on the mainchain.
    pub confirmed_through: Option<u64>,
    pub pruned_bytes: ByteSize,
    pub pruned_blocks: u64,
}

impl SideChain {
    pub fn push_meta(&mut self, block: MetaBlock) {
        self.meta.entry(block.epoch).or_default().push(block);
    }

    pub fn push_summary(&mut self, summary: SummaryBlock) {
        self.summaries.insert(summary.epoch, summary);
    }

    pub fn meta_blocks(&self, epoch: u64) -> &[MetaBlock] {
        self.meta.get(&epoch).map_or(&[], Vec::as_slice)
    }

    pub fn last_meta_hash(&self, epoch: u64) -> Option<crate::ids::Hash32> {
        self.meta.get(&epoch).and_then(|v| v.last()).map(MetaBlock::hash)
    }

    /// Records that the sync covering epochs up to `epoch` reached the
    /// confirmation depth.
    pub fn mark_confirmed(&mut self, epoch: u64) {
        self.confirmed_through = Some(self.confirmed_through.map_or(epoch, |c| c.max(epoch)));
    }

    /// Drops the meta-blocks of every epoch up to `confirmed_epoch`.
    pub fn prune(&mut self, confirmed_epoch: u64) -> Result<ByteSize, LedgerError> {
        if self.confirmed_through.is_none_or(|c| c < confirmed_epoch) {
            return Err(LedgerError::SyncNotConfirmed(confirmed_epoch));
        }
        let keep = self.meta.split_off(&(confirmed_epoch + 1));
        let dropped = std::mem::replace(&mut self.meta, keep);
        let mut freed = ByteSize::ZERO;
        for b in dropped.values().flatten() {
            freed += b.size();
            self.pruned_blocks += 1;
        }
        self.pruned_bytes += freed;
        Ok(freed)
    }

    pub fn summary_bytes(&self) -> ByteSize {
        self.summaries.values().map(SummaryBlock::size).sum()
    }

    pub fn meta_bytes(&self) -> ByteSize {
        self.meta.values().flatten().map(MetaBlock::size).sum()
    }

    /// Bytes currently stored.
    pub fn retained_bytes(&self) -> ByteSize {
        self.summary_bytes() + self.meta_bytes()
    }

    /// Writes every retained block as one JSON object per line.
    pub fn dump_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (epoch, blocks) in &self.meta {
            for b in blocks {
                serde_json::to_writer(&mut w, &serde_json::json!({ "type": "meta", "epoch": epoch, "block": b }))?;
                writeln!(w)?;
            }
        }
        for s in self.summaries.values() {
            serde_json::to_writer(&mut w, &serde_json::json!({ "type": "summary", "epoch": s.epoch, "block": s }))?;
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{user_key, Hash32, PoolId};
    use crate::ledger::tx::{SidechainTx, TxBody};

    fn block(epoch: u64, round: u64, size: ByteSize) -> MetaBlock {
        let mut tx = SidechainTx::new(
            round,
            user_key(1),
            TxBody::Collect { pool: PoolId::default(), position: Default::default(), amount_a: 0, amount_b: 0 },
            0,
        );
        tx.size = size;
        MetaBlock {
            epoch,
            round,
            parent_hash: Hash32::default(),
            txs: vec![tx],
            effects: vec![],
            state_root: Hash32::default(),
            votes: vec![],
        }
    }

    #[test]
    fn prune_requires_confirmation() {
        let mut c = SideChain::default();
        c.push_meta(block(0, 0, ByteSize::from_bytes(10)));
        assert_eq!(c.prune(0), Err(LedgerError::SyncNotConfirmed(0)));
        assert_eq!(c.meta_blocks(0).len(), 1);
        c.mark_confirmed(0);
        assert_eq!(c.prune(0), Ok(ByteSize::from_bytes(10)));
        assert!(c.meta_blocks(0).is_empty());
    }

    #[test]
    fn prune_keeps_summaries_and_later_epochs() {
        let mut c = SideChain::default();
        for r in 0..30 {
            c.push_meta(block(0, r, ByteSize::from_bytes(1 << 20)));
        }
        c.push_meta(block(1, 0, ByteSize::from_bytes(5)));
        c.push_summary(SummaryBlock { epoch: 0, payouts: vec![], positions: vec![], meta_block_hashes: vec![] });
        c.mark_confirmed(0);
        assert_eq!(c.prune(0).unwrap(), ByteSize::from_bytes(30 << 20));
        assert_eq!(c.pruned_blocks, 30);
        assert_eq!(c.meta_bytes(), ByteSize::from_bytes(5));
        assert_eq!(c.summaries.len(), 1);
        let mut out = Vec::new();
        c.dump_jsonl(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 2);
    }
}
