use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    /// Label holder / server.
    Active,
    /// Feature-only participant / client.
    Passive,
}

/// Participant identity; the active party always has index 0.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PartyId {
    pub role: Role,
    pub index: u16,
}

impl PartyId {
    pub const ACTIVE: PartyId = PartyId { role: Role::Active, index: 0 };

    pub const fn passive(index: u16) -> Self {
        Self { role: Role::Passive, index }
    }

    pub fn is_active(&self) -> bool {
        self.role == Role::Active
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.role {
            Role::Active => write!(f, "active"),
            Role::Passive => write!(f, "passive{}", self.index),
        }
    }
}

impl FromStr for PartyId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "active" {
            return Ok(Self::ACTIVE);
        }
        s.strip_prefix("passive")
            .and_then(|i| i.parse().ok())
            .map(Self::passive)
            .ok_or_else(|| format!("bad party id {s:?}"))
    }
}

impl From<PartyId> for String {
    fn from(p: PartyId) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PartyId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_roundtrip() {
        for p in [PartyId::ACTIVE, PartyId::passive(1), PartyId::passive(12)] {
            assert_eq!(p.to_string().parse::<PartyId>().unwrap(), p);
        }
        assert!("server".parse::<PartyId>().is_err());
    }
}
