//! Consortium ledger: hash-chained blocks, stake-based miner selection,
//! random enterprise and validator selection, and stake rewards.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::index;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::defense::Outcome;
use crate::error::{domain, Error, Result};
use crate::rng;

pub type Hash = [u8; 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Genesis,
    Keys,
    GlobalModel,
    Verdicts,
    Rewards,
    Update,
}

impl PayloadKind {
    pub fn code(self) -> u8 {
        match self {
            PayloadKind::Genesis => 0,
            PayloadKind::Keys => 1,
            PayloadKind::GlobalModel => 2,
            PayloadKind::Verdicts => 3,
            PayloadKind::Rewards => 4,
            PayloadKind::Update => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PayloadKind::Genesis => "genesis",
            PayloadKind::Keys => "keys",
            PayloadKind::GlobalModel => "global_model",
            PayloadKind::Verdicts => "verdicts",
            PayloadKind::Rewards => "rewards",
            PayloadKind::Update => "update",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Hash,
    pub kind: PayloadKind,
    pub payload: Vec<u8>,
    /// `None` only for the genesis block.
    pub miner: Option<usize>,
    pub hash: Hash,
}

/// SHA-256 over height ‖ prev ‖ kind ‖ payload length ‖ payload ‖ miner,
/// integers little-endian, an absent miner encoded as `u64::MAX`.
pub fn block_digest(
    height: u64,
    prev: &Hash,
    kind: PayloadKind,
    payload: &[u8],
    miner: Option<usize>,
) -> Hash {
    let mut h = Sha256::new();
    h.update(height.to_le_bytes());
    h.update(prev);
    h.update([kind.code()]);
    h.update((payload.len() as u64).to_le_bytes());
    h.update(payload);
    h.update(miner.map_or(u64::MAX, |m| m as u64).to_le_bytes());
    h.finalize().into()
}

impl Block {
    pub fn recompute_hash(&self) -> Hash {
        block_digest(
            self.height,
            &self.prev_hash,
            self.kind,
            &self.payload,
            self.miner,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    blocks: Vec<Block>,
}

impl Ledger {
    pub fn new(genesis_payload: Vec<u8>) -> Self {
        let prev = [0u8; 32];
        let hash = block_digest(0, &prev, PayloadKind::Genesis, &genesis_payload, None);
        Self {
            blocks: vec![Block {
                height: 0,
                prev_hash: prev,
                kind: PayloadKind::Genesis,
                payload: genesis_payload,
                miner: None,
                hash,
            }],
        }
    }

    /// Rebuild from stored blocks without checking them; see [`Ledger::verify_chain`].
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(domain!("a ledger needs a genesis block"));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn head(&self) -> &Block {
        &self.blocks[self.blocks.len() - 1]
    }

    pub fn append_block(
        &mut self,
        kind: PayloadKind,
        payload: Vec<u8>,
        miner: usize,
        states: &[EnterpriseState],
    ) -> Result<&Block> {
        let st = states.get(miner).ok_or(Error::Registry(miner))?;
        if st.removed {
            return Err(Error::Protocol(alloc::format!(
                "enterprise {miner} is removed and cannot mine"
            )));
        }
        if kind == PayloadKind::Genesis {
            return Err(Error::Protocol(
                "only the first block is a genesis block".into(),
            ));
        }
        let head = self.head();
        let height = head.height + 1;
        let prev_hash = head.hash;
        let hash = block_digest(height, &prev_hash, kind, &payload, Some(miner));
        self.blocks.push(Block {
            height,
            prev_hash,
            kind,
            payload,
            miner: Some(miner),
            hash,
        });
        Ok(self.head())
    }

    /// Recompute every hash and link; the error names the first bad height.
    pub fn verify_chain(&self) -> Result<()> {
        let mut prev = [0u8; 32];
        for (i, b) in self.blocks.iter().enumerate() {
            let genesis_ok = (i == 0) == (b.kind == PayloadKind::Genesis);
            if b.height != i as u64
                || b.prev_hash != prev
                || b.recompute_hash() != b.hash
                || !genesis_ok
            {
                return Err(Error::BrokenChain(i as u64));
            }
            prev = b.hash;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Local,
    Validator,
    SimpleMiner,
    LeaderMiner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnterpriseState {
    pub id: usize,
    pub role: Role,
    pub stake: f64,
    pub strikes: u32,
    pub removed: bool,
}

impl EnterpriseState {
    pub fn new(id: usize) -> Self {
        Self {
            id,
            role: Role::Local,
            stake: 0.0,
            strikes: 0,
            removed: false,
        }
    }

    fn is_miner(&self) -> bool {
        matches!(self.role, Role::SimpleMiner | Role::LeaderMiner)
    }
}

pub fn registry(n: usize) -> Vec<EnterpriseState> {
    (0..n).map(EnterpriseState::new).collect()
}

/// Highest stake among `candidates`; ties go to the lowest id.
fn stake_argmax(
    states: &[EnterpriseState],
    candidates: impl Iterator<Item = usize>,
) -> Option<usize> {
    candidates.fold(None, |best, i| match best {
        Some(b)
            if states[i].stake > states[b].stake
                || (states[i].stake == states[b].stake && i < b) =>
        {
            Some(i)
        }
        Some(b) => Some(b),
        None => Some(i),
    })
}

fn active(states: &[EnterpriseState]) -> impl Iterator<Item = usize> + '_ {
    states.iter().filter(|s| !s.removed).map(|s| s.id)
}

pub fn select_simple_miner(states: &[EnterpriseState]) -> Result<usize> {
    stake_argmax(states, active(states)).ok_or_else(|| domain!("every enterprise is removed"))
}

/// The `count` highest-stake active enterprises, in selection order.
pub fn select_simple_miners(states: &[EnterpriseState], count: usize) -> Result<Vec<usize>> {
    let mut ids: Vec<usize> = active(states).collect();
    if count == 0 || count > ids.len() {
        return Err(domain!(
            "cannot pick {count} miners from {} active enterprises",
            ids.len()
        ));
    }
    ids.sort_by(|&a, &b| states[b].stake.total_cmp(&states[a].stake).then(a.cmp(&b)));
    ids.truncate(count);
    Ok(ids)
}

pub fn select_leader(states: &[EnterpriseState], simple_miners: &[usize]) -> Result<usize> {
    for &m in simple_miners {
        let st = states.get(m).ok_or(Error::Registry(m))?;
        if st.removed {
            return Err(Error::Protocol(alloc::format!(
                "removed enterprise {m} listed as a miner"
            )));
        }
    }
    stake_argmax(states, simple_miners.iter().copied())
        .ok_or_else(|| domain!("no simple miners to choose a leader from"))
}

/// Uniform sample without replacement from the active non-miner
/// enterprises, sorted by id; deterministic per `(seed, round)`.
pub fn select_enterprises(
    states: &[EnterpriseState],
    count: usize,
    seed: u64,
    round: u64,
) -> Result<Vec<usize>> {
    let eligible: Vec<usize> = states
        .iter()
        .filter(|s| !s.removed && !s.is_miner())
        .map(|s| s.id)
        .collect();
    sample_ids(
        &eligible,
        count,
        rng::derive(seed, &[rng::tag::SELECT, round]),
    )
}

fn sample_ids(pool: &[usize], count: usize, seed: u64) -> Result<Vec<usize>> {
    if count > pool.len() {
        return Err(domain!(
            "cannot select {count} of {} eligible enterprises",
            pool.len()
        ));
    }
    let mut r = rng::rng(seed);
    let mut out: Vec<usize> = index::sample(&mut r, pool.len(), count)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// max(1, ⌈n/10⌉).
pub fn validator_count(n: usize) -> usize {
    n.div_ceil(10).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRoles {
    pub simple_miners: Vec<usize>,
    pub leader: usize,
    pub selected: Vec<usize>,
    pub validators: Vec<usize>,
}

/// Reset every role, then pick simple miners by stake, the round's Δc
/// from the rest, the leader among the miners, and validators from the
/// active enterprises left over.
pub fn assign_roles(
    states: &mut [EnterpriseState],
    miners: usize,
    selected: usize,
    validators: usize,
    seed: u64,
    round: u64,
) -> Result<RoundRoles> {
    if active(states).next().is_none() {
        return Err(Error::Protocol("every enterprise is removed".into()));
    }
    states.iter_mut().for_each(|s| s.role = Role::Local);
    let simple_miners = select_simple_miners(states, miners)?;
    for &m in &simple_miners {
        states[m].role = Role::SimpleMiner;
    }
    let chosen = select_enterprises(states, selected, seed, round)?;
    let leader = select_leader(states, &simple_miners)?;
    states[leader].role = Role::LeaderMiner;
    let rest: Vec<usize> = states
        .iter()
        .filter(|s| !s.removed && !s.is_miner() && chosen.binary_search(&s.id).is_err())
        .map(|s| s.id)
        .collect();
    let picked = sample_ids(
        &rest,
        validators.min(rest.len()),
        rng::derive(seed, &[rng::tag::VALIDATORS, round]),
    )?;
    for &v in &picked {
        states[v].role = Role::Validator;
    }
    Ok(RoundRoles {
        simple_miners,
        leader,
        selected: chosen,
        validators: picked,
    })
}

/// Benign adds `reward`, poisoned adds `penalty`, floored at 0. Removed
/// enterprises keep their stake.
pub fn apply_reward(
    states: &mut [EnterpriseState],
    verdicts: &[(usize, Outcome)],
    reward: f64,
    penalty: f64,
) -> Result<()> {
    if let Some(&(id, _)) = verdicts.iter().find(|(id, _)| *id >= states.len()) {
        return Err(Error::Registry(id));
    }
    for &(id, outcome) in verdicts {
        let st = &mut states[id];
        if st.removed {
            continue;
        }
        st.stake = match outcome {
            Outcome::Benign => st.stake + reward,
            Outcome::Poisoned => (st.stake + penalty).max(0.0),
        };
    }
    Ok(())
}
