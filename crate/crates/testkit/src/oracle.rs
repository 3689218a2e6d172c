//! From-scratch consensus oracle over a tiny DAG.
//!
//! Shares no code with the engine. Incompatibility is evaluated as the
//! unfolded recursive rule (some pair of distinct ancestors-or-self in
//! direct conflict), cliques by exhaustive enumeration of independent sets,
//! and settlement by re-running the rules on the whole active set after
//! every block.

use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleBlock {
    pub id: [u8; 32],
    pub thread: u32,
    pub period: u64,
    /// Indices of parents within the block list, by thread. Empty for genesis.
    pub parents: Vec<usize>,
    pub fitness: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleStatus {
    Pending,
    Active,
    Final,
    Stale,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSnapshot {
    pub status: Vec<OracleStatus>,
    /// Cliques as sorted id lists with fitness, sorted by id list.
    pub cliques: Vec<(Vec<[u8; 32]>, u64)>,
    pub blockclique: Vec<[u8; 32]>,
}

pub struct Oracle {
    blocks: Vec<OracleBlock>,
    threshold: u64,
    incompat: Vec<Vec<bool>>,
    descendant: Vec<Vec<bool>>,
    status: Vec<OracleStatus>,
}

impl Oracle {
    /// `blocks` must list genesis blocks first and be topologically ordered.
    pub fn new(blocks: Vec<OracleBlock>, threshold: u64) -> Self {
        let n = blocks.len();
        let anc: Vec<Vec<bool>> = (0..n).map(|x| ancestors_or_self(&blocks, x)).collect();
        let direct: Vec<Vec<bool>> = (0..n)
            .map(|a| (0..n).map(|b| a != b && direct(&blocks, a, b)).collect())
            .collect();
        let mut incompat = vec![vec![false; n]; n];
        for x in 0..n {
            for y in 0..n {
                incompat[x][y] = (0..n)
                    .filter(|&a| anc[x][a])
                    .any(|a| (0..n).filter(|&b| anc[y][b]).any(|b| direct[a][b]));
            }
        }
        let descendant = (0..n)
            .map(|x| (0..n).map(|y| y != x && anc[y][x]).collect())
            .collect();
        let status = blocks
            .iter()
            .map(|b| {
                if b.parents.is_empty() {
                    OracleStatus::Active
                } else {
                    OracleStatus::Pending
                }
            })
            .collect();
        Oracle {
            blocks,
            threshold,
            incompat,
            descendant,
            status,
        }
    }

    pub fn incompatible(&self, x: usize, y: usize) -> bool {
        self.incompat[x][y]
    }

    /// Adds block `x` and settles. Returns the state afterwards.
    pub fn add(&mut self, x: usize) -> OracleSnapshot {
        let parents = self.blocks[x].parents.clone();
        let stale = parents.iter().any(|&p| self.status[p] == OracleStatus::Stale)
            || parents
                .iter()
                .any(|&p| parents.iter().any(|&q| self.incompat[p][q]))
            || parents.iter().any(|&p| self.incompat[x][p])
            || (0..self.blocks.len())
                .any(|f| self.status[f] == OracleStatus::Final && self.incompat[x][f]);
        self.status[x] = if stale {
            OracleStatus::Stale
        } else {
            OracleStatus::Active
        };
        self.settle()
    }

    pub fn snapshot(&self) -> OracleSnapshot {
        let active = self.active();
        let cliques = self.cliques(&active);
        let best = self.best(&cliques);
        self.describe(&cliques, best)
    }

    fn active(&self) -> Vec<usize> {
        (0..self.blocks.len())
            .filter(|&x| self.status[x] == OracleStatus::Active)
            .collect()
    }

    fn settle(&mut self) -> OracleSnapshot {
        loop {
            let active = self.active();
            let cliques = self.cliques(&active);
            let best = self.best(&cliques);
            let best_fitness = self.fitness(&cliques[best]);
            let mut changes = Vec::new();
            for &x in &active {
                let containing: Vec<&Vec<usize>> =
                    cliques.iter().filter(|c| c.contains(&x)).collect();
                let max = containing.iter().map(|c| self.fitness(c)).max().unwrap_or(0);
                if max + self.threshold < best_fitness {
                    changes.push((x, OracleStatus::Stale));
                } else if containing.len() == cliques.len()
                    && cliques.iter().any(|c| {
                        c.iter()
                            .filter(|&&d| self.descendant[x][d])
                            .map(|&d| self.blocks[d].fitness)
                            .sum::<u64>()
                            > self.threshold
                    })
                {
                    changes.push((x, OracleStatus::Final));
                }
            }
            if changes.is_empty() {
                return self.describe(&cliques, best);
            }
            for (x, s) in changes {
                self.status[x] = s;
            }
        }
    }

    fn fitness(&self, clique: &[usize]) -> u64 {
        clique.iter().map(|&x| self.blocks[x].fitness).sum()
    }

    /// Every maximal set of pairwise compatible active blocks.
    fn cliques(&self, active: &[usize]) -> Vec<Vec<usize>> {
        let (conflicted, free): (Vec<usize>, Vec<usize>) = active
            .iter()
            .partition(|&&x| active.iter().any(|&y| self.incompat[x][y]));
        let mut sets = Vec::new();
        let mut current = Vec::new();
        self.independent_sets(&conflicted, 0, &mut current, &mut sets);
        let mut out = Vec::new();
        for s in sets {
            let maximal = conflicted
                .iter()
                .filter(|x| !s.contains(x))
                .all(|&x| s.iter().any(|&y| self.incompat[x][y]));
            if maximal {
                let mut c = s.clone();
                c.extend(&free);
                c.sort_unstable();
                out.push(c);
            }
        }
        out
    }

    fn independent_sets(
        &self,
        vs: &[usize],
        i: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if i == vs.len() {
            out.push(current.clone());
            return;
        }
        self.independent_sets(vs, i + 1, current, out);
        let v = vs[i];
        if current.iter().all(|&u| !self.incompat[u][v]) {
            current.push(v);
            self.independent_sets(vs, i + 1, current, out);
            current.pop();
        }
    }

    fn sorted_ids(&self, clique: &[usize]) -> Vec<[u8; 32]> {
        let mut ids: Vec<[u8; 32]> = clique.iter().map(|&x| self.blocks[x].id).collect();
        ids.sort();
        ids
    }

    fn best(&self, cliques: &[Vec<usize>]) -> usize {
        let mut best = 0;
        for c in 1..cliques.len() {
            let ord = self
                .fitness(&cliques[best])
                .cmp(&self.fitness(&cliques[c]))
                .reverse()
                .then_with(|| {
                    let a = self.sorted_ids(&cliques[best]);
                    let b = self.sorted_ids(&cliques[c]);
                    cmp_sum(&a, &b).then_with(|| a.cmp(&b))
                });
            if ord == Ordering::Greater {
                best = c;
            }
        }
        best
    }

    fn describe(&self, cliques: &[Vec<usize>], best: usize) -> OracleSnapshot {
        let mut list: Vec<(Vec<[u8; 32]>, u64)> = cliques
            .iter()
            .map(|c| (self.sorted_ids(c), self.fitness(c)))
            .collect();
        list.sort();
        OracleSnapshot {
            status: self.status.clone(),
            cliques: list,
            blockclique: self.sorted_ids(&cliques[best]),
        }
    }
}

fn ancestors_or_self(blocks: &[OracleBlock], x: usize) -> Vec<bool> {
    let mut seen = vec![false; blocks.len()];
    let mut stack = vec![x];
    while let Some(b) = stack.pop() {
        if !seen[b] {
            seen[b] = true;
            stack.extend(&blocks[b].parents);
        }
    }
    seen
}

/// Walks own-thread parent links from `b` looking for `a`.
fn path(blocks: &[OracleBlock], a: usize, b: usize, thread: u32) -> bool {
    if blocks[a].thread != thread {
        return false;
    }
    let mut cur = b;
    loop {
        if cur == a {
            return true;
        }
        if blocks[cur].thread != thread || blocks[cur].parents.is_empty() {
            return false;
        }
        cur = blocks[cur].parents[thread as usize];
    }
}

fn direct(blocks: &[OracleBlock], a: usize, b: usize) -> bool {
    let (x, y) = (&blocks[a], &blocks[b]);
    if x.parents.is_empty() || y.parents.is_empty() {
        return false;
    }
    let (tx, ty) = (x.thread as usize, y.thread as usize);
    let thread = tx == ty && x.parents[tx] == y.parents[ty];
    let grandpa = !path(blocks, x.parents[tx], y.parents[tx], x.thread)
        && !path(blocks, y.parents[ty], x.parents[ty], y.thread);
    thread || grandpa
}

/// Compares the sums of two id lists read as big-endian integers, using
/// schoolbook addition on 32-bit limbs.
fn cmp_sum(a: &[[u8; 32]], b: &[[u8; 32]]) -> Ordering {
    fn sum(ids: &[[u8; 32]]) -> Vec<u64> {
        // 10 limbs of 32 bits, least significant first, hold sums of up to
        // 2^64 ids.
        let mut acc = vec![0u64; 10];
        for id in ids {
            for (i, chunk) in id.rchunks(4).enumerate() {
                acc[i] += u64::from(u32::from_be_bytes(chunk.try_into().unwrap()));
            }
        }
        for i in 0..acc.len() - 1 {
            let carry = acc[i] >> 32;
            acc[i] &= 0xffff_ffff;
            acc[i + 1] += carry;
        }
        acc
    }
    let (sa, sb) = (sum(a), sum(b));
    sa.iter().rev().cmp(sb.iter().rev())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u8) -> [u8; 32] {
        let mut a = [0u8; 32];
        a[31] = n;
        a
    }

    #[test]
    fn sums_compare_with_carries() {
        let big = [0xffu8; 32];
        assert_eq!(cmp_sum(&[big, id(1)], &[big]), Ordering::Greater);
        assert_eq!(cmp_sum(&[id(3)], &[id(1), id(2)]), Ordering::Equal);
        let mut hi = [0u8; 32];
        hi[0] = 1;
        assert_eq!(cmp_sum(&[hi], &[big]), Ordering::Less);
    }

    #[test]
    fn siblings_split_into_cliques() {
        let g = OracleBlock {
            id: id(0),
            thread: 0,
            period: 0,
            parents: vec![],
            fitness: 1,
        };
        let kid = |n: u8| OracleBlock {
            id: id(n),
            thread: 0,
            period: n as u64,
            parents: vec![0],
            fitness: 1,
        };
        let mut o = Oracle::new(vec![g, kid(1), kid(2), kid(3)], 10);
        o.add(1);
        o.add(2);
        let s = o.add(3);
        assert_eq!(s.cliques.len(), 3);
        assert_eq!(s.blockclique, vec![id(0), id(1)]);
    }
}
