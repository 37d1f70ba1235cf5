pub mod adp;
pub mod adp2;
pub mod mvdr;

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Adp,
    Adp2,
    Mvdr,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Adp, Protocol::Adp2, Protocol::Mvdr];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Adp => "ADP",
            Protocol::Adp2 => "ADP2",
            Protocol::Mvdr => "MVDR",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace(['-', '_'], "").as_str() {
            "ADP" | "ADPMAC" => Ok(Protocol::Adp),
            "ADP2" | "ADP2MAC" => Ok(Protocol::Adp2),
            "MVDR" => Ok(Protocol::Mvdr),
            other => Err(format!("unknown protocol {other:?} (expected ADP, ADP2 or MVDR)")),
        }
    }
}
