//! Non-IID splits of one dataset across clients.
//!
//! Both partitioners first decide which examples each client owns, then
//! split every client's examples into a local train and a local test part.
//! The union of all local test parts is the global test set.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose, RngStream};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl ClientSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub clients: Vec<ClientSplit>,
    pub seed: u64,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    /// Every client's test indices, in client order.
    pub fn global_test(&self) -> Vec<usize> {
        self.clients.iter().flat_map(|c| c.test.iter().copied()).collect()
    }

    /// Checks index validity, per-client train/test disjointness and that no
    /// example is owned by two clients.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        let mut owner = vec![usize::MAX; ds.len()];
        for (ci, client) in self.clients.iter().enumerate() {
            for &i in client.train.iter().chain(&client.test) {
                if i >= ds.len() {
                    return Err(Error::Partition(format!("client {ci} holds invalid index {i}")));
                }
                if owner[i] != usize::MAX {
                    return Err(Error::Partition(format!(
                        "example {i} assigned to clients {} and {ci}",
                        owner[i]
                    )));
                }
                owner[i] = ci;
            }
        }
        Ok(())
    }
}

/// How to split a dataset across clients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PartitionScheme {
    LabelShard { classes_per_client: usize },
    Dirichlet { alpha: f64 },
}

impl std::fmt::Display for PartitionScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PartitionScheme::LabelShard { classes_per_client } => write!(f, "label_shard:{classes_per_client}"),
            PartitionScheme::Dirichlet { alpha } => write!(f, "dirichlet:{alpha}"),
        }
    }
}

impl std::str::FromStr for PartitionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("partition", format!("expected label_shard:K or dirichlet:ALPHA, got `{s}`"));
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "label_shard" => Ok(PartitionScheme::LabelShard {
                classes_per_client: arg.parse().map_err(|_| bad())?,
            }),
            "dirichlet" => {
                let alpha: f64 = arg.parse().map_err(|_| bad())?;
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::config("partition", "dirichlet alpha must be positive"));
                }
                Ok(PartitionScheme::Dirichlet { alpha })
            }
            _ => Err(bad()),
        }
    }
}

fn validate_common(num_clients: usize, train_fraction: f64) -> Result<()> {
    if num_clients == 0 {
        return Err(Error::config("N", "need at least one client"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train_fraction", "must lie in (0, 1)"));
    }
    Ok(())
}

/// Shuffles each client's examples and splits them into train and test.
/// The train size is `round(n * train_fraction)`, moved by at most one so
/// that both parts are nonempty whenever `n >= 2`.
fn split_clients(owned: Vec<Vec<usize>>, train_fraction: f64, rng: &mut RngStream) -> Vec<ClientSplit> {
    owned
        .into_iter()
        .map(|mut idx| {
            idx.shuffle(rng);
            let n = idx.len();
            let mut n_train = (n as f64 * train_fraction).round() as usize;
            if n >= 2 {
                n_train = n_train.clamp(1, n - 1);
            }
            let test = idx.split_off(n_train);
            ClientSplit { train: idx, test }
        })
        .collect()
}

/// Each client gets `classes_per_client` classes, assigned round-robin over
/// a seed-shuffled class list; a class's examples are divided evenly among
/// the clients holding it.
pub fn partition_label_shard(
    ds: &Dataset,
    num_clients: usize,
    classes_per_client: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<Partition> {
    validate_common(num_clients, train_fraction)?;
    let num_classes = ds.num_classes();
    if classes_per_client == 0 || classes_per_client > num_classes {
        return Err(Error::config(
            "partition",
            format!("classes_per_client must be in 1..={num_classes}"),
        ));
    }
    let mut rng = stream(seed, Purpose::Partition, &[0]);
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.shuffle(&mut rng);

    let mut holders = vec![Vec::new(); num_classes];
    for client in 0..num_clients {
        for m in 0..classes_per_client {
            holders[order[(client * classes_per_client + m) % num_classes]].push(client);
        }
    }

    let mut owned = vec![Vec::new(); num_clients];
    for (class, mut examples) in ds.indices_by_class().into_iter().enumerate() {
        let h = holders[class].len();
        if h == 0 {
            continue;
        }
        if examples.len() < h {
            return Err(Error::Partition(format!(
                "class {class} has {} examples but {h} clients hold it",
                examples.len()
            )));
        }
        examples.shuffle(&mut rng);
        let (base, extra) = (examples.len() / h, examples.len() % h);
        let mut start = 0;
        for (k, &client) in holders[class].iter().enumerate() {
            let size = base + usize::from(k < extra);
            owned[client].extend_from_slice(&examples[start..start + size]);
            start += size;
        }
    }
    Ok(Partition {
        clients: split_clients(owned, train_fraction, &mut rng),
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirichletOptions {
    /// Full redraws attempted when some client ends up too small.
    pub max_resamples: usize,
    /// Minimum examples per client (2 keeps both local splits nonempty).
    pub min_examples: usize,
    /// After the redraws are exhausted, move single examples from the
    /// largest client to the deficient ones instead of failing.
    pub top_up: bool,
    /// Equalize client sizes afterwards (within one example).
    pub rebalance: bool,
}

impl Default for DirichletOptions {
    fn default() -> Self {
        Self {
            max_resamples: 100,
            min_examples: 2,
            top_up: true,
            rebalance: false,
        }
    }
}

/// Proportions drawn from a symmetric Dirichlet via normalized Gamma draws.
/// Redraws when every Gamma variate underflows to zero (tiny `alpha`).
fn dirichlet_draw(alpha: f64, k: usize, rng: &mut RngStream) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|d| d / total).collect();
        }
    }
}

/// Integer counts summing to `n`, proportional to `shares` (largest
/// remainder, ties to the lower index).
fn apportion(n: usize, shares: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// `held[client][class]` lists the examples of that class owned by the client.
type Holdings = Vec<Vec<Vec<usize>>>;

fn allocate_dirichlet(by_class: &[Vec<usize>], num_clients: usize, alpha: f64, rng: &mut RngStream) -> Holdings {
    let mut held = vec![vec![Vec::new(); by_class.len()]; num_clients];
    for (class, examples) in by_class.iter().enumerate() {
        let mut examples = examples.clone();
        examples.shuffle(rng);
        let counts = apportion(examples.len(), &dirichlet_draw(alpha, num_clients, rng));
        let mut start = 0;
        for (client, &c) in counts.iter().enumerate() {
            held[client][class].extend_from_slice(&examples[start..start + c]);
            start += c;
        }
    }
    held
}

fn client_sizes(held: &Holdings) -> Vec<usize> {
    held.iter().map(|h| h.iter().map(Vec::len).sum()).collect()
}

/// Moves one example of the donor's most abundant class to `to`.
fn transfer_one(held: &mut Holdings, from: usize, to: usize) {
    let class = (0..held[from].len())
        .max_by(|&a, &b| held[from][a].len().cmp(&held[from][b].len()).then(b.cmp(&a)))
        .expect("at least one class");
    let example = held[from][class].pop().expect("donor holds examples");
    held[to][class].push(example);
}

fn argmax(v: &[usize]) -> usize {
    (0..v.len()).max_by(|&a, &b| v[a].cmp(&v[b]).then(b.cmp(&a))).unwrap_or(0)
}

fn top_up(held: &mut Holdings, min_examples: usize) {
    loop {
        let sizes = client_sizes(held);
        let Some(needy) = sizes.iter().position(|&s| s < min_examples) else {
            return;
        };
        transfer_one(held, argmax(&sizes), needy);
    }
}

fn rebalance(held: &mut Holdings) {
    let n: usize = client_sizes(held).iter().sum();
    let k = held.len();
    let target: Vec<usize> = (0..k).map(|i| n / k + usize::from(i < n % k)).collect();
    loop {
        let sizes = client_sizes(held);
        let surplus: Vec<isize> = sizes.iter().zip(&target).map(|(&s, &t)| s as isize - t as isize).collect();
        let donor = (0..k).max_by(|&a, &b| surplus[a].cmp(&surplus[b]).then(b.cmp(&a))).unwrap();
        let taker = (0..k).min_by(|&a, &b| surplus[a].cmp(&surplus[b]).then(a.cmp(&b))).unwrap();
        if surplus[donor] <= 0 || surplus[taker] >= 0 {
            return;
        }
        transfer_one(held, donor, taker);
    }
}

/// For each class, a symmetric Dirichlet(`alpha`) draw over clients decides
/// how that class's examples are shared.
pub fn partition_dirichlet(
    ds: &Dataset,
    num_clients: usize,
    alpha: f64,
    train_fraction: f64,
    seed: u64,
    options: &DirichletOptions,
) -> Result<Partition> {
    validate_common(num_clients, train_fraction)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config("partition", "dirichlet alpha must be positive"));
    }
    if ds.len() < num_clients * options.min_examples {
        return Err(Error::Partition(format!(
            "{} examples cannot give {num_clients} clients {} each",
            ds.len(),
            options.min_examples
        )));
    }
    let mut rng = stream(seed, Purpose::Partition, &[1]);
    let by_class = ds.indices_by_class();
    let mut held = allocate_dirichlet(&by_class, num_clients, alpha, &mut rng);
    let mut attempts = 0;
    while client_sizes(&held).iter().any(|&s| s < options.min_examples) {
        if attempts == options.max_resamples {
            if options.top_up {
                top_up(&mut held, options.min_examples);
                break;
            }
            return Err(Error::Partition(format!(
                "some client has fewer than {} examples after {attempts} redraws (alpha {alpha})",
                options.min_examples
            )));
        }
        held = allocate_dirichlet(&by_class, num_clients, alpha, &mut rng);
        attempts += 1;
    }
    if options.rebalance {
        rebalance(&mut held);
    }
    let owned = held.into_iter().map(|h| h.concat()).collect();
    Ok(Partition {
        clients: split_clients(owned, train_fraction, &mut rng),
        seed,
    })
}
