//! Heisenberg chain Hamiltonians on the computational product basis.
//!
//! Conventions: `|0⟩ = |↓⟩`, `|1⟩ = |↑⟩`. Qubit positions run left to right and
//! position 0 is the most significant bit of a basis index. With the ancilla
//! enabled the order is `0′, 0, 1, …, N`; otherwise `0, 1, …, N`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{ParametricOperator, SparseOperator};

/// Magnetic order of the chain, fixing the sign of every coupling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Ferro,
    Antiferro,
}

impl Phase {
    pub fn sign(self) -> f64 {
        match self {
            Phase::Ferro => -1.0,
            Phase::Antiferro => 1.0,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Ferro => "FM",
            Phase::Antiferro => "AFM",
        })
    }
}

impl FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FM" | "FERRO" => Ok(Phase::Ferro),
            "AFM" | "ANTIFERRO" => Ok(Phase::Antiferro),
            other => Err(format!("unknown phase `{other}` (expected FM or AFM)")),
        }
    }
}

/// Static description of a sender + channel (+ optional ancilla) chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    /// Number of channel sites `N` (sites `1..=N`).
    pub n_channel: usize,
    pub phase: Phase,
    /// Exchange scale `|J|`; times are measured in `1/|J|`.
    pub j_mag: f64,
    /// Boundary coupling `|J₀|` between sender and site 1.
    pub j0_mag: f64,
    /// Uniform z-field on the sender and channel.
    pub hz: f64,
    /// Adds the decoupled ancilla `0′` used for entanglement distribution.
    pub entangle_mode: bool,
    /// z-field added only while selecting a ground state.
    pub degeneracy_break: f64,
}

impl ChainSpec {
    pub fn new(n_channel: usize, phase: Phase) -> Self {
        Self {
            n_channel,
            phase,
            j_mag: 1.0,
            j0_mag: 1.0,
            hz: 0.0,
            entangle_mode: false,
            degeneracy_break: 1e-6,
        }
    }

    pub fn with_entangle_mode(mut self, on: bool) -> Self {
        self.entangle_mode = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channel < 1 {
            return Err(Error::InvalidSpec("n_channel must be at least 1".into()));
        }
        if !(self.j_mag > 0.0) || !self.j_mag.is_finite() {
            return Err(Error::InvalidSpec("j_mag must be positive".into()));
        }
        if !(self.j0_mag >= 0.0) || !self.j0_mag.is_finite() {
            return Err(Error::InvalidSpec("j0_mag must be non-negative".into()));
        }
        if !self.hz.is_finite() {
            return Err(Error::InvalidSpec("hz must be finite".into()));
        }
        if !(self.degeneracy_break >= 0.0) {
            return Err(Error::InvalidSpec("degeneracy_break must be non-negative".into()));
        }
        if self.n_sites() > 16 {
            return Err(Error::InvalidSpec(format!(
                "{} sites exceed the supported register size",
                self.n_sites()
            )));
        }
        Ok(())
    }

    /// Signed channel coupling `J_k`.
    pub fn coupling(&self) -> f64 {
        self.phase.sign() * self.j_mag
    }

    /// Signed boundary coupling `J₀`.
    pub fn boundary_coupling(&self) -> f64 {
        self.phase.sign() * self.j0_mag
    }

    /// Sites in the full register.
    pub fn n_sites(&self) -> usize {
        self.n_channel + 1 + usize::from(self.entangle_mode)
    }

    /// Links `k = 0..N-1`; link `k` joins chain sites `k` and `k + 1`.
    pub fn n_links(&self) -> usize {
        self.n_channel
    }

    pub fn register(&self) -> Register {
        Register::full(self)
    }

    pub fn channel_register(&self) -> Register {
        Register::channel(self)
    }
}

/// Mapping from chain sites (`0` sender, `1..=N` channel) to qubit positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Register {
    pub n_sites: usize,
    pub ancilla: Option<usize>,
    pub sender: Option<usize>,
    channel_start: usize,
    n_channel: usize,
}

impl Register {
    pub fn full(spec: &ChainSpec) -> Self {
        let a = usize::from(spec.entangle_mode);
        Self {
            n_sites: spec.n_sites(),
            ancilla: spec.entangle_mode.then_some(0),
            sender: Some(a),
            channel_start: a + 1,
            n_channel: spec.n_channel,
        }
    }

    /// Channel sites only, used to prepare `|ψ_ch⟩`.
    pub fn channel(spec: &ChainSpec) -> Self {
        Self {
            n_sites: spec.n_channel,
            ancilla: None,
            sender: None,
            channel_start: 0,
            n_channel: spec.n_channel,
        }
    }

    /// Qubit position of chain site `site`, if present in this register.
    pub fn position(&self, site: usize) -> Option<usize> {
        match site {
            0 => self.sender,
            k if k <= self.n_channel => Some(self.channel_start + k - 1),
            _ => None,
        }
    }

    pub fn receiver(&self) -> usize {
        self.channel_start + self.n_channel - 1
    }

    /// Number of low-order bits occupied by the channel.
    pub fn channel_bits(&self) -> usize {
        self.n_channel
    }
}

#[inline]
pub(crate) fn bit_mask(n_sites: usize, position: usize) -> usize {
    1usize << (n_sites - 1 - position)
}

/// States with a fixed number of up spins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectorBasis {
    n_sites: usize,
    n_excitations: usize,
    states: Vec<u32>,
    lookup: Vec<u32>,
}

impl SectorBasis {
    pub fn new(n_sites: usize, n_excitations: usize) -> Result<Self> {
        if n_excitations > n_sites {
            return Err(Error::InvalidSpec(format!(
                "{n_excitations} excitations on {n_sites} sites"
            )));
        }
        let full = 1usize << n_sites;
        let mut lookup = vec![u32::MAX; full];
        let mut states = Vec::new();
        for s in 0..full {
            if s.count_ones() as usize == n_excitations {
                lookup[s] = states.len() as u32;
                states.push(s as u32);
            }
        }
        Ok(Self {
            n_sites,
            n_excitations,
            states,
            lookup,
        })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_excitations(&self) -> usize {
        self.n_excitations
    }

    pub fn full_index(&self, i: usize) -> usize {
        self.states[i] as usize
    }

    pub fn index_of(&self, full: usize) -> Option<usize> {
        match self.lookup.get(full) {
            Some(&u32::MAX) | None => None,
            Some(&i) => Some(i as usize),
        }
    }
}

/// Hilbert space an operator or state lives on.
#[derive(Clone, Debug, PartialEq)]
pub enum Basis {
    Full { n_sites: usize },
    Sector(Arc<SectorBasis>),
}

impl Basis {
    pub fn full(n_sites: usize) -> Self {
        Basis::Full { n_sites }
    }

    pub fn sector(n_sites: usize, n_excitations: usize) -> Result<Self> {
        Ok(Basis::Sector(Arc::new(SectorBasis::new(n_sites, n_excitations)?)))
    }

    pub fn dim(&self) -> usize {
        match self {
            Basis::Full { n_sites } => 1 << n_sites,
            Basis::Sector(s) => s.dim(),
        }
    }

    pub fn n_sites(&self) -> usize {
        match self {
            Basis::Full { n_sites } => *n_sites,
            Basis::Sector(s) => s.n_sites(),
        }
    }

    #[inline]
    pub fn full_index(&self, i: usize) -> usize {
        match self {
            Basis::Full { .. } => i,
            Basis::Sector(s) => s.full_index(i),
        }
    }

    #[inline]
    pub fn index_of(&self, full: usize) -> Option<usize> {
        match self {
            Basis::Full { n_sites } => (full < (1 << n_sites)).then_some(full),
            Basis::Sector(s) => s.index_of(full),
        }
    }

    pub fn is_sector(&self) -> bool {
        matches!(self, Basis::Sector(_))
    }
}

/// One additive piece of a Hamiltonian, addressed by qubit positions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Term {
    /// `J S_a · S_b`
    Exchange { a: usize, b: usize, coupling: f64 },
    /// `B · S_site`
    Field { site: usize, field: [f64; 3] },
}

impl Term {
    fn conserves_sz(&self) -> bool {
        match self {
            Term::Exchange { .. } => true,
            Term::Field { field, .. } => field[0] == 0.0 && field[1] == 0.0,
        }
    }

    /// Calls `push(row, col, value)` for every matrix element generated on `basis`.
    fn for_each_entry(&self, basis: &Basis, mut push: impl FnMut(u32, u32, C64)) -> Result<()> {
        let n = basis.n_sites();
        match *self {
            Term::Exchange { a, b, coupling } => {
                let (ma, mb) = (bit_mask(n, a), bit_mask(n, b));
                for i in 0..basis.dim() {
                    let s = basis.full_index(i);
                    let parallel = ((s & ma) != 0) == ((s & mb) != 0);
                    let diag = if parallel { 0.25 } else { -0.25 };
                    push(i as u32, i as u32, C64::new(coupling * diag, 0.0));
                    if !parallel {
                        let j = basis.index_of(s ^ ma ^ mb).expect("flip-flop stays in sector");
                        push(j as u32, i as u32, C64::new(0.5 * coupling, 0.0));
                    }
                }
            }
            Term::Field { site, field } => {
                let m = bit_mask(n, site);
                let [bx, by, bz] = field;
                let transverse = bx != 0.0 || by != 0.0;
                for i in 0..basis.dim() {
                    let s = basis.full_index(i);
                    let up = s & m != 0;
                    push(
                        i as u32,
                        i as u32,
                        C64::new(if up { 0.5 * bz } else { -0.5 * bz }, 0.0),
                    );
                    if transverse {
                        let Some(j) = basis.index_of(s ^ m) else {
                            return Err(Error::SymmetryViolation {
                                max_commutator: 0.5 * bx.hypot(by),
                            });
                        };
                        // <↓|B·S|↑> = (Bx + i By)/2, <↑|B·S|↓> = (Bx − i By)/2
                        let v = if up {
                            C64::new(0.5 * bx, 0.5 * by)
                        } else {
                            C64::new(0.5 * bx, -0.5 * by)
                        };
                        push(j as u32, i as u32, v);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Symbolic Hamiltonian: a list of terms on an `n_sites` register.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Hamiltonian {
    pub n_sites: usize,
    pub terms: Vec<Term>,
}

impl Hamiltonian {
    pub fn new(n_sites: usize) -> Self {
        Self {
            n_sites,
            terms: Vec::new(),
        }
    }

    pub fn exchange(&mut self, a: usize, b: usize, coupling: f64) -> &mut Self {
        if coupling != 0.0 {
            self.terms.push(Term::Exchange { a, b, coupling });
        }
        self
    }

    pub fn field(&mut self, site: usize, field: [f64; 3]) -> &mut Self {
        if field != [0.0; 3] {
            self.terms.push(Term::Field { site, field });
        }
        self
    }

    pub fn conserves_sz(&self) -> bool {
        self.terms.iter().all(Term::conserves_sz)
    }

    pub fn to_sparse(&self) -> SparseOperator {
        self.to_operator(&Basis::full(self.n_sites))
            .expect("full space holds every term")
    }

    pub fn to_operator(&self, basis: &Basis) -> Result<SparseOperator> {
        if basis.n_sites() != self.n_sites {
            return Err(Error::DimensionMismatch {
                expected: self.n_sites,
                got: basis.n_sites(),
            });
        }
        let mut t = Vec::new();
        for term in &self.terms {
            term.for_each_entry(basis, |r, c, v| t.push((r, c, v)))?;
        }
        // Keep the diagonal in the pattern even when every term vanishes there.
        for i in 0..basis.dim() as u32 {
            t.push((i, i, C64::new(0.0, 0.0)));
        }
        Ok(SparseOperator::from_triplets(basis.dim(), t))
    }

    /// `static + Σ_k c_k · components[k]` on `basis`, where each component is a
    /// list of unit-strength terms.
    pub fn parametric(
        static_part: &Hamiltonian,
        components: &[Vec<Term>],
        basis: &Basis,
    ) -> Result<ParametricOperator> {
        let mut tagged = Vec::new();
        for term in &static_part.terms {
            term.for_each_entry(basis, |r, c, v| tagged.push((r, c, v, None)))?;
        }
        for (k, comp) in components.iter().enumerate() {
            for term in comp {
                term.for_each_entry(basis, |r, c, v| tagged.push((r, c, v, Some(k))))?;
            }
        }
        for i in 0..basis.dim() as u32 {
            tagged.push((i, i, C64::new(0.0, 0.0), None));
        }
        Ok(ParametricOperator::new(basis.dim(), components.len(), tagged))
    }
}

/// Diagonal of total `S^z` on the full space of `n_sites`.
pub fn total_sz_diagonal(n_sites: usize) -> Vec<f64> {
    (0..1usize << n_sites)
        .map(|s| s.count_ones() as f64 - 0.5 * n_sites as f64)
        .collect()
}

/// Total `S^z` restricted to `basis`.
pub fn total_sz_on(basis: &Basis) -> Vec<f64> {
    let n = basis.n_sites() as f64;
    (0..basis.dim())
        .map(|i| basis.full_index(i).count_ones() as f64 - 0.5 * n)
        .collect()
}

/// Channel Hamiltonian `Σ_{k=1}^{N-1} J S_k·S_{k+1} + h_z Σ_k S^z_k (+ Σ_k B_k·S_k)` on `register`.
/// `fields`, when given, is indexed by chain site `0..=N`; only channel entries are used.
pub fn channel_terms(spec: &ChainSpec, register: &Register, fields: Option<&[[f64; 3]]>) -> Hamiltonian {
    let mut h = Hamiltonian::new(register.n_sites);
    let j = spec.coupling();
    for k in 1..spec.n_channel {
        h.exchange(
            register.position(k).unwrap(),
            register.position(k + 1).unwrap(),
            j,
        );
    }
    for k in 1..=spec.n_channel {
        let mut b = fields.map_or([0.0; 3], |f| f[k]);
        b[2] += spec.hz;
        h.field(register.position(k).unwrap(), b);
    }
    h
}

fn check_lengths(spec: &ChainSpec, deltas: &[f64], fields: &[[f64; 3]]) -> Result<()> {
    if deltas.len() != spec.n_links() {
        return Err(Error::DimensionMismatch {
            expected: spec.n_links(),
            got: deltas.len(),
        });
    }
    if fields.len() != spec.n_channel + 1 {
        return Err(Error::DimensionMismatch {
            expected: spec.n_channel + 1,
            got: fields.len(),
        });
    }
    Ok(())
}

/// Static (field) part of the evolution Hamiltonian on the full register: Overhauser
/// fields and `h_z` on sites `0..=N`. The ancilla carries no terms.
pub fn field_terms(spec: &ChainSpec, fields: &[[f64; 3]]) -> Hamiltonian {
    let reg = spec.register();
    let mut h = Hamiltonian::new(reg.n_sites);
    for k in 0..=spec.n_channel {
        let mut b = fields.get(k).copied().unwrap_or([0.0; 3]);
        b[2] += spec.hz;
        h.field(reg.position(k).unwrap(), b);
    }
    h
}

/// Unit-strength `S_k·S_{k+1}` for each link `k = 0..N-1` on the full register.
pub fn link_terms(spec: &ChainSpec) -> Vec<Vec<Term>> {
    let reg = spec.register();
    (0..spec.n_links())
        .map(|k| {
            vec![Term::Exchange {
                a: reg.position(k).unwrap(),
                b: reg.position(k + 1).unwrap(),
                coupling: 1.0,
            }]
        })
        .collect()
}

/// Signed link couplings `J_k (1 + δ_k)` with `J_0` the boundary coupling.
pub fn link_couplings(spec: &ChainSpec, deltas: &[f64]) -> Vec<f64> {
    deltas
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let base = if k == 0 {
                spec.boundary_coupling()
            } else {
                spec.coupling()
            };
            base * (1.0 + d)
        })
        .collect()
}

/// `Σ_k J(1+δ_k) S_k·S_{k+1} + Σ_k B_k·S_k + h_z Σ_k S^z_k` as symbolic terms.
pub fn total_terms(spec: &ChainSpec, deltas: &[f64], fields: &[[f64; 3]]) -> Result<Hamiltonian> {
    spec.validate()?;
    check_lengths(spec, deltas, fields)?;
    let reg = spec.register();
    let mut h = field_terms(spec, fields);
    for (k, c) in link_couplings(spec, deltas).into_iter().enumerate() {
        h.exchange(reg.position(k).unwrap(), reg.position(k + 1).unwrap(), c);
    }
    Ok(h)
}

/// Channel Hamiltonian embedded in the full register (sender and ancilla idle).
pub fn build_channel_hamiltonian(spec: &ChainSpec) -> Result<SparseOperator> {
    spec.validate()?;
    Ok(channel_terms(spec, &spec.register(), None).to_sparse())
}

/// Sender–channel coupling `J₀ S_0·S_1` on the full register.
pub fn build_interaction_hamiltonian(spec: &ChainSpec) -> Result<SparseOperator> {
    spec.validate()?;
    let reg = spec.register();
    let mut h = Hamiltonian::new(reg.n_sites);
    h.exchange(
        reg.position(0).unwrap(),
        reg.position(1).unwrap(),
        spec.boundary_coupling(),
    );
    Ok(h.to_sparse())
}

pub fn build_total_hamiltonian(
    spec: &ChainSpec,
    deltas: &[f64],
    fields: &[[f64; 3]],
) -> Result<SparseOperator> {
    Ok(total_terms(spec, deltas, fields)?.to_sparse())
}

/// Restricts `op` to `sector`. Fails if `op` couples different magnetizations.
pub fn project_to_sector(op: &SparseOperator, sector: &SectorBasis) -> Result<SparseOperator> {
    use crate::linalg::LinearOperator;
    let n = sector.n_sites();
    if op.dim() != 1 << n {
        return Err(Error::DimensionMismatch {
            expected: 1 << n,
            got: op.dim(),
        });
    }
    let comm = op.diagonal_commutator_norm(&total_sz_diagonal(n));
    if comm > 1e-10 {
        return Err(Error::SymmetryViolation { max_commutator: comm });
    }
    let mut t = Vec::new();
    for i in 0..sector.dim() {
        let s = sector.full_index(i);
        for (c, v) in op.row(s) {
            if let Some(j) = sector.index_of(c) {
                t.push((i as u32, j as u32, v));
            }
        }
    }
    Ok(SparseOperator::from_triplets(sector.dim(), t))
}
