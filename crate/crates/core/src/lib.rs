//! Retrieval-augmented LLM code generation for a simulation toolbox: query
//! planning, keyword-routed retrieval, prompt assembly, script validation
//! with auto-correction, a mock toolbox executor, a repair loop and a
//! benchmark harness.

pub mod distance;
pub mod evaluation;
pub mod executor;
pub mod knowledge_base;
pub mod llm;
pub mod orchestrator;
pub mod prompt;
pub mod query_planner;
pub mod retrieval;
pub mod script;
pub mod validation;

/// 64-bit FNV-1a.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
