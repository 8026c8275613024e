//! Address data model and the proxy address-generation rule.
//!
//! A 128-bit address is split into a fixed 64-bit [`NetworkPrefix`] and a
//! 64-bit [`DeviceIdentifier`]. Octets of the identifier are named `b7..b0`
//! (most to least significant). Every identifier encodes its own position in
//! the allocation tree: a child differs from its issuer in exactly one octet.
//!
//! The local controller holds `0.0.0.0.0.0.0.1` and owns two pools:
//! `j.0.0.0.0.0.0.1` for `j = 1..=255`, then `0.0.0.0.0.0.0.i` for
//! `i = 2..=255`. Every other node writes its counter into its *fill octet*,
//! the first zero octet scanning down from `b7` (never `b0`). A node whose
//! `b7..b1` are all nonzero is a leaf and cannot issue anything.
//!
//! The identifier with every octet at the maximum is reserved and never
//! issued. The octet maximum is a parameter of [`AddressSpace`] so the whole
//! tree can be enumerated exhaustively at a reduced radix.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest octet value of a real address.
pub const OCTET_MAX: u8 = 255;

/// Number of octets in a prefix or an identifier.
pub const HALF_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddrError {
    /// The node's pool is fully consumed; the request must go to its parent.
    #[error("address pool exhausted")]
    Exhausted,
    #[error("invalid device identifier {id}: {reason}")]
    InvalidIdentifier {
        id: DeviceIdentifier,
        reason: &'static str,
    },
    #[error("allocation state {state:?} does not fit identifier {id}")]
    StateMismatch {
        id: DeviceIdentifier,
        state: AllocationState,
    },
    #[error("malformed address {text:?}: {reason}")]
    MalformedAddress { text: String, reason: &'static str },
}

fn malformed(text: &str, reason: &'static str) -> AddrError {
    AddrError::MalformedAddress {
        text: text.to_owned(),
        reason,
    }
}

/// Upper 64 bits of an address, `b15..b8`. Fixed for a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NetworkPrefix([u8; HALF_LEN]);

impl NetworkPrefix {
    /// `CEDF:0CB8:8BA3:8A2E`, the domain prefix used in the examples.
    pub const EXAMPLE: NetworkPrefix =
        NetworkPrefix([0xce, 0xdf, 0x0c, 0xb8, 0x8b, 0xa3, 0x8a, 0x2e]);

    pub const fn new(octets: [u8; HALF_LEN]) -> Self {
        NetworkPrefix(octets)
    }

    pub const fn octets(&self) -> [u8; HALF_LEN] {
        self.0
    }
}

/// Lower 64 bits of an address, `b7..b0`, stored most significant first.
///
/// The type holds any eight octets so that arbitrary text can be parsed;
/// [`DeviceIdentifier::new`] and [`AddressSpace::validate`] enforce the
/// allocation invariants.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeviceIdentifier([u8; HALF_LEN]);

impl DeviceIdentifier {
    /// Identifier of the local controller, `0.0.0.0.0.0.0.1`.
    pub const CONTROLLER: DeviceIdentifier = DeviceIdentifier([0, 0, 0, 0, 0, 0, 0, 1]);

    /// Builds an identifier and checks it against the standard address space.
    pub fn new(octets: [u8; HALF_LEN]) -> Result<Self, AddrError> {
        let id = DeviceIdentifier(octets);
        AddressSpace::STANDARD.validate(id)?;
        Ok(id)
    }

    /// Wraps raw octets without validation.
    pub const fn from_octets(octets: [u8; HALF_LEN]) -> Self {
        DeviceIdentifier(octets)
    }

    pub const fn from_u64(value: u64) -> Self {
        DeviceIdentifier(value.to_be_bytes())
    }

    pub const fn to_u64(self) -> u64 {
        u64::from_be_bytes(self.0)
    }

    pub const fn octets(&self) -> [u8; HALF_LEN] {
        self.0
    }

    /// Octet `b_k`, `k` in `0..=7`.
    pub fn octet(&self, k: usize) -> u8 {
        self.0[HALF_LEN - 1 - k]
    }

    fn with_octet(mut self, k: usize, value: u8) -> Self {
        self.0[HALF_LEN - 1 - k] = value;
        self
    }

    /// Position of the octet this node writes when issuing children, or
    /// `None` for a leaf.
    pub fn fill_octet(&self) -> Option<usize> {
        (1..HALF_LEN).rev().find(|&k| self.octet(k) == 0)
    }

    /// True when the nonzero octets among `b7..b1` form an unbroken run
    /// starting at `b7`.
    pub fn is_contiguous(&self) -> bool {
        let mut seen_zero = false;
        for k in (1..HALF_LEN).rev() {
            if self.octet(k) == 0 {
                seen_zero = true;
            } else if seen_zero {
                return false;
            }
        }
        true
    }

    /// Dotted-decimal form `b7.b6.b5.b4.b3.b2.b1.b0`.
    pub fn to_dotted_decimal(&self) -> String {
        dotted(&self.0)
    }
}

impl fmt::Display for DeviceIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_dotted_decimal())
    }
}

impl fmt::Debug for DeviceIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DeviceIdentifier({self})")
    }
}

impl FromStr for DeviceIdentifier {
    type Err = AddrError;

    /// Parses eight period-separated decimal octets. No invariant checks.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let octets = parse_dotted::<HALF_LEN>(text)?;
        Ok(DeviceIdentifier(octets))
    }
}

/// A full address: domain prefix plus device identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ipv6Address {
    pub prefix: NetworkPrefix,
    pub id: DeviceIdentifier,
}

impl Ipv6Address {
    pub const fn new(prefix: NetworkPrefix, id: DeviceIdentifier) -> Self {
        Ipv6Address { prefix, id }
    }

    pub fn from_octets(octets: [u8; 16]) -> Self {
        let mut prefix = [0u8; HALF_LEN];
        let mut id = [0u8; HALF_LEN];
        prefix.copy_from_slice(&octets[..HALF_LEN]);
        id.copy_from_slice(&octets[HALF_LEN..]);
        Ipv6Address::new(NetworkPrefix(prefix), DeviceIdentifier(id))
    }

    pub fn octets(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..HALF_LEN].copy_from_slice(&self.prefix.0);
        out[HALF_LEN..].copy_from_slice(&self.id.0);
        out
    }

    fn groups(&self) -> [u16; 8] {
        let o = self.octets();
        std::array::from_fn(|i| u16::from_be_bytes([o[2 * i], o[2 * i + 1]]))
    }
}

impl fmt::Display for Ipv6Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_hex(self))
    }
}

impl FromStr for Ipv6Address {
    type Err = AddrError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        parse_hex(text)
    }
}

/// Per-node allocation status: the last child index issued.
///
/// `count1` is present only on the local controller and tracks its second
/// pool (`0.0.0.0.0.0.0.i`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AllocationState {
    pub count: u8,
    pub count1: Option<u8>,
}

impl AllocationState {
    pub const CONTROLLER: AllocationState = AllocationState {
        count: 0,
        count1: Some(1),
    };
    pub const PROXY: AllocationState = AllocationState {
        count: 0,
        count1: None,
    };

    /// Fresh state for a node holding `id`.
    pub fn initial(id: DeviceIdentifier) -> Self {
        if is_controller(id) {
            Self::CONTROLLER
        } else {
            Self::PROXY
        }
    }
}

fn is_controller(id: DeviceIdentifier) -> bool {
    id.octet(7) == 0 && id.octet(0) == 1
}

/// Identifier space with a configurable octet maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AddressSpace {
    max: u8,
}

impl Default for AddressSpace {
    fn default() -> Self {
        Self::STANDARD
    }
}

impl AddressSpace {
    pub const STANDARD: AddressSpace = AddressSpace { max: OCTET_MAX };

    /// Reduced-radix space whose octets range over `0..=max`.
    ///
    /// # Panics
    /// If `max < 2`; the controller's second pool would be empty.
    pub fn with_max(max: u8) -> Self {
        assert!(max >= 2, "octet maximum must be at least 2");
        AddressSpace { max }
    }

    pub fn max(&self) -> u8 {
        self.max
    }

    /// The all-maximum identifier, never issued.
    pub fn reserved(&self) -> DeviceIdentifier {
        DeviceIdentifier([self.max; HALF_LEN])
    }

    fn check_octets(&self, id: DeviceIdentifier) -> Result<(), AddrError> {
        let invalid = |reason| Err(AddrError::InvalidIdentifier { id, reason });
        if id.0.iter().any(|&b| b > self.max) {
            return invalid("octet above the space maximum");
        }
        if id.octet(0) == 0 {
            return invalid("b0 must be at least 1");
        }
        if id == self.reserved() {
            return invalid("reserved all-maximum identifier");
        }
        Ok(())
    }

    /// Checks every invariant of an assigned identifier.
    pub fn validate(&self, id: DeviceIdentifier) -> Result<(), AddrError> {
        self.check_octets(id)?;
        if !id.is_contiguous() {
            return Err(AddrError::InvalidIdentifier {
                id,
                reason: "nonzero octets of b7..b1 are not a run from b7",
            });
        }
        Ok(())
    }

    fn check_state(&self, id: DeviceIdentifier, state: AllocationState) -> Result<(), AddrError> {
        let fits = state.count <= self.max
            && match (is_controller(id), state.count1) {
                (true, Some(c1)) => (1..=self.max).contains(&c1),
                (false, None) => true,
                _ => false,
            };
        if fits {
            Ok(())
        } else {
            Err(AddrError::StateMismatch { id, state })
        }
    }

    /// Issues the next child identifier of `id`.
    ///
    /// The identifier only needs valid octets here (no contiguity check):
    /// the fill-octet rule is defined for any identifier.
    pub fn generate(
        &self,
        id: DeviceIdentifier,
        state: AllocationState,
    ) -> Result<(DeviceIdentifier, AllocationState), AddrError> {
        self.check_octets(id)?;
        self.check_state(id, state)?;

        if is_controller(id) {
            if state.count < self.max {
                let j = state.count + 1;
                let child = id.with_octet(7, j);
                return Ok((child, AllocationState { count: j, ..state }));
            }
            let count1 = state.count1.unwrap_or(1);
            if count1 < self.max {
                let i = count1 + 1;
                let child = id.with_octet(0, i);
                return Ok((
                    child,
                    AllocationState {
                        count1: Some(i),
                        ..state
                    },
                ));
            }
            return Err(AddrError::Exhausted);
        }

        let k = id.fill_octet().ok_or(AddrError::Exhausted)?;
        if state.count >= self.max {
            return Err(AddrError::Exhausted);
        }
        let reserved = self.reserved();
        for j in (state.count + 1)..=self.max {
            let child = id.with_octet(k, j);
            if child != reserved {
                return Ok((child, AllocationState { count: j, ..state }));
            }
        }
        Err(AddrError::Exhausted)
    }

    /// The identifier that issued `id`, or `None` for the controller.
    pub fn parent_of(&self, id: DeviceIdentifier) -> Result<Option<DeviceIdentifier>, AddrError> {
        self.validate(id)?;
        match (1..HALF_LEN).find(|&k| id.octet(k) != 0) {
            Some(lowest) => Ok(Some(id.with_octet(lowest, 0))),
            None if id.octet(0) == 1 => Ok(None),
            None => Ok(Some(DeviceIdentifier::CONTROLLER)),
        }
    }

    /// How many more successful [`generate`](Self::generate) calls remain.
    pub fn remaining_capacity(&self, id: DeviceIdentifier, state: AllocationState) -> u32 {
        let max = u32::from(self.max);
        let count = u32::from(state.count.min(self.max));
        if is_controller(id) {
            let count1 = u32::from(state.count1.unwrap_or(1).min(self.max));
            return (max - count) + (max - count1);
        }
        let Some(k) = id.fill_octet() else {
            return 0;
        };
        let mut left = max - count;
        if left > 0 && id.with_octet(k, self.max) == self.reserved() {
            left -= 1;
        }
        left
    }
}

/// Issues the next address from `addr` in the standard space. The prefix is
/// carried over unchanged.
pub fn generate_address(
    addr: &Ipv6Address,
    state: AllocationState,
) -> Result<(Ipv6Address, AllocationState), AddrError> {
    let (id, next) = AddressSpace::STANDARD.generate(addr.id, state)?;
    Ok((Ipv6Address::new(addr.prefix, id), next))
}

pub fn parent_of(id: DeviceIdentifier) -> Result<Option<DeviceIdentifier>, AddrError> {
    AddressSpace::STANDARD.parent_of(id)
}

pub fn remaining_capacity(addr: &Ipv6Address, state: AllocationState) -> u32 {
    AddressSpace::STANDARD.remaining_capacity(addr.id, state)
}

/// Canonical hex text: lowercase, leading zeros dropped, and the longest run
/// of zero groups (leftmost on ties, length one counts) written as `::`.
pub fn format_hex(addr: &Ipv6Address) -> String {
    let groups = addr.groups();

    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < groups.len() {
        if groups[i] != 0 {
            i += 1;
            continue;
        }
        let start = i;
        while i < groups.len() && groups[i] == 0 {
            i += 1;
        }
        let len = i - start;
        if best.is_none_or(|(_, best_len)| len > best_len) {
            best = Some((start, len));
        }
    }

    let join = |gs: &[u16]| {
        gs.iter()
            .map(|g| format!("{g:x}"))
            .collect::<Vec<_>>()
            .join(":")
    };
    match best {
        Some((start, len)) => {
            format!(
                "{}::{}",
                join(&groups[..start]),
                join(&groups[start + len..])
            )
        }
        None => join(&groups),
    }
}

/// Parses full or `::`-compressed hex text, case-insensitively.
pub fn parse_hex(text: &str) -> Result<Ipv6Address, AddrError> {
    fn parse_groups<'a>(text: &'a str, part: &'a str) -> Result<Vec<u16>, AddrError> {
        if part.is_empty() {
            return Ok(Vec::new());
        }
        part.split(':')
            .map(|g| {
                if g.is_empty() {
                    return Err(malformed(text, "empty group"));
                }
                if g.len() > 4 {
                    return Err(malformed(text, "group longer than four digits"));
                }
                if !g.bytes().all(|b| b.is_ascii_hexdigit()) {
                    return Err(malformed(text, "non-hex digit"));
                }
                Ok(u16::from_str_radix(g, 16).expect("validated hex group"))
            })
            .collect()
    }

    let groups: Vec<u16> = match text.split_once("::") {
        Some((head, tail)) => {
            if tail.contains("::") {
                return Err(malformed(text, "'::' used more than once"));
            }
            let head = parse_groups(text, head)?;
            let tail = parse_groups(text, tail)?;
            if head.len() + tail.len() > 7 {
                return Err(malformed(text, "wrong group count"));
            }
            let zeros = 8 - head.len() - tail.len();
            head.into_iter()
                .chain(std::iter::repeat_n(0, zeros))
                .chain(tail)
                .collect()
        }
        None => {
            let groups = parse_groups(text, text)?;
            if groups.len() != 8 {
                return Err(malformed(text, "wrong group count"));
            }
            groups
        }
    };

    let mut octets = [0u8; 16];
    for (i, g) in groups.iter().enumerate() {
        octets[2 * i..2 * i + 2].copy_from_slice(&g.to_be_bytes());
    }
    Ok(Ipv6Address::from_octets(octets))
}

fn dotted(octets: &[u8]) -> String {
    octets
        .iter()
        .map(u8::to_string)
        .collect::<Vec<_>>()
        .join(".")
}

fn parse_dotted<const N: usize>(text: &str) -> Result<[u8; N], AddrError> {
    let parts: Vec<&str> = text.split('.').collect();
    if parts.len() != N {
        return Err(malformed(text, "wrong octet count"));
    }
    let mut out = [0u8; N];
    for (slot, part) in out.iter_mut().zip(&parts) {
        if part.is_empty() || part.len() > 3 || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed(text, "octet is not a decimal number"));
        }
        let value: u16 = part.parse().expect("validated digits");
        *slot = u8::try_from(value).map_err(|_| malformed(text, "octet above 255"))?;
    }
    Ok(out)
}

/// Sixteen period-separated decimal octets, `b15..b0`.
pub fn to_dotted_decimal(addr: &Ipv6Address) -> String {
    dotted(&addr.octets())
}

/// Inverse of [`to_dotted_decimal`]. Eight octets are read as a bare
/// identifier under `prefix`; sixteen octets carry their own prefix.
pub fn from_dotted_decimal(prefix: NetworkPrefix, text: &str) -> Result<Ipv6Address, AddrError> {
    match text.split('.').count() {
        HALF_LEN => Ok(Ipv6Address::new(prefix, text.parse()?)),
        16 => Ok(Ipv6Address::from_octets(parse_dotted::<16>(text)?)),
        _ => Err(malformed(text, "wrong octet count")),
    }
}
