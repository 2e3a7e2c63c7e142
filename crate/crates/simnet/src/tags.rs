//! Message tags used by every protocol in the workspace.

pub const PSI_BLIND_REQ: u16 = 0x0101;
pub const PSI_BLIND_RESP: u16 = 0x0102;
pub const PSI_ALIGN_RESULT: u16 = 0x0103;

pub const KEYS_PUBLIC: u16 = 0x0201;
pub const KEYS_EVAL: u16 = 0x0202;

pub const SB_GH: u16 = 0x0301;
pub const SB_NODE_REQ: u16 = 0x0302;
pub const SB_HISTOGRAMS: u16 = 0x0303;
pub const SB_SPLIT: u16 = 0x0304;
pub const SB_SPLIT_ACK: u16 = 0x0305;
pub const SB_LAYOUT: u16 = 0x0306;
pub const SB_DONE: u16 = 0x0307;

pub const INF_NODE_REQ: u16 = 0x0401;
pub const INF_NODE_RESP: u16 = 0x0402;
pub const INF_DONE: u16 = 0x0403;

pub const LR_MODEL: u16 = 0x0501;
pub const LR_DATA: u16 = 0x0502;
pub const LR_GRADIENT: u16 = 0x0503;
pub const LR_BATCH_DIGEST: u16 = 0x0504;
pub const LR_EVAL: u16 = 0x0505;
pub const LR_ACCURACY: u16 = 0x0506;

pub const WOE_BINS: u16 = 0x0601;
pub const WOE_GOOD: u16 = 0x0602;
pub const SMOTE_DATA: u16 = 0x0611;
pub const SMOTE_MASKED: u16 = 0x0612;
pub const SMOTE_A_BLOCK: u16 = 0x0613;

pub const TEST_PING: u16 = 0xff01;
pub const TEST_PONG: u16 = 0xff02;

const NAMES: &[(u16, &str)] = &[
    (PSI_BLIND_REQ, "PSI_BLIND_REQ"),
    (PSI_BLIND_RESP, "PSI_BLIND_RESP"),
    (PSI_ALIGN_RESULT, "PSI_ALIGN_RESULT"),
    (KEYS_PUBLIC, "KEYS_PUBLIC"),
    (KEYS_EVAL, "KEYS_EVAL"),
    (SB_GH, "SB_GH"),
    (SB_NODE_REQ, "SB_NODE_REQ"),
    (SB_HISTOGRAMS, "SB_HISTOGRAMS"),
    (SB_SPLIT, "SB_SPLIT"),
    (SB_SPLIT_ACK, "SB_SPLIT_ACK"),
    (SB_LAYOUT, "SB_LAYOUT"),
    (SB_DONE, "SB_DONE"),
    (INF_NODE_REQ, "INF_NODE_REQ"),
    (INF_NODE_RESP, "INF_NODE_RESP"),
    (INF_DONE, "INF_DONE"),
    (LR_MODEL, "LR_MODEL"),
    (LR_DATA, "LR_DATA"),
    (LR_GRADIENT, "LR_GRADIENT"),
    (LR_BATCH_DIGEST, "LR_BATCH_DIGEST"),
    (LR_EVAL, "LR_EVAL"),
    (LR_ACCURACY, "LR_ACCURACY"),
    (WOE_BINS, "WOE_BINS"),
    (WOE_GOOD, "WOE_GOOD"),
    (SMOTE_DATA, "SMOTE_DATA"),
    (SMOTE_MASKED, "SMOTE_MASKED"),
    (SMOTE_A_BLOCK, "SMOTE_A_BLOCK"),
    (TEST_PING, "TEST_PING"),
    (TEST_PONG, "TEST_PONG"),
];

pub fn name(tag: u16) -> String {
    NAMES
        .iter()
        .find(|(t, _)| *t == tag)
        .map(|(_, n)| n.to_string())
        .unwrap_or_else(|| format!("0x{tag:04x}"))
}

pub fn by_name(name: &str) -> Option<u16> {
    NAMES.iter().find(|(_, n)| *n == name).map(|(t, _)| *t)
}
