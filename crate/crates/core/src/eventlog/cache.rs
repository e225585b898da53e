//! Binary cache of a parsed log.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DPRDLOG1"
//! U: u64, I: u64, L: u64
//! L x (user: u64, item: u64, time: f64)
//! U x (len: u64, utf-8 bytes)    user names
//! I x (len: u64, utf-8 bytes)    item names
//! ```

use std::io::{Read, Write};

use super::{Event, EventLog};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"DPRDLOG1";

pub fn write_cache<W: Write>(log: &EventLog, mut out: W) -> Result<()> {
    out.write_all(CACHE_MAGIC)?;
    for n in [log.num_users(), log.num_items(), log.len()] {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    for e in log.events() {
        out.write_all(&(e.user as u64).to_le_bytes())?;
        out.write_all(&(e.item as u64).to_le_bytes())?;
        out.write_all(&e.time.to_le_bytes())?;
    }
    for name in log.user_names().iter().chain(log.item_names()) {
        out.write_all(&(name.len() as u64).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_name<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u64(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Checkpoint(format!("log cache name: {e}")))
}

pub fn read_cache<R: Read>(mut input: R) -> Result<EventLog> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Checkpoint("not a log cache (bad magic)".into()));
    }
    let num_users = read_u64(&mut input)? as usize;
    let num_items = read_u64(&mut input)? as usize;
    let len = read_u64(&mut input)? as usize;
    let mut events = Vec::with_capacity(len);
    for _ in 0..len {
        let user = read_u64(&mut input)? as usize;
        let item = read_u64(&mut input)? as usize;
        let time = f64::from_bits(read_u64(&mut input)?);
        if user >= num_users || item >= num_items {
            return Err(Error::Checkpoint(format!("event ({user}, {item}) out of range")));
        }
        events.push(Event { user, item, time });
    }
    if events.is_empty() {
        return Err(Error::EmptyLog);
    }
    let user_names = (0..num_users).map(|_| read_name(&mut input)).collect::<Result<_>>()?;
    let item_names = (0..num_items).map(|_| read_name(&mut input)).collect::<Result<_>>()?;
    Ok(EventLog::from_parts(events, user_names, item_names, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let log = EventLog::from_records([("alice", "song", 2.5)]).unwrap();
        let mut bytes = Vec::new();
        write_cache(&log, &mut bytes).unwrap();
        assert_eq!(&bytes[..8], b"DPRDLOG1");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(bytes[48..56].try_into().unwrap()), 2.5);
        assert_eq!(bytes.len(), 8 + 24 + 24 + (8 + 5) + (8 + 4));
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(read_cache(&b"NOTALOG!\0\0\0\0"[..]).is_err());
    }
}
