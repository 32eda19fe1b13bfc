//! Replayable workload traces.
//!
//! ```text
//! edgesched-trace 1
//! nodes <N> images <I>
//! node <id> <cpu> <memory> <storage> <comm_power> <comp_power> <bandwidth>
//! image <id> <size>
//! episode <id> <slots>
//! slot <index> <tasks>
//! task <id> <data> <cycles> <memory> <image> <deadline> <tx_power> <gain_0> .. <gain_N-1>
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::workload::{EpisodeWorkload, NodeSpec, TaskArrival, Topology};
use crate::error::Result;
use crate::model::{ImageId, ImageSpec, MicroserviceRequest};
use crate::textio::{expect_header, push_f64s, Lines};

const MAGIC: &str = "edgesched-trace";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub topology: Topology,
    pub episodes: Vec<(u64, EpisodeWorkload)>,
}

impl Trace {
    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC} {VERSION}\n");
        let _ = writeln!(s, "nodes {} images {}", self.topology.nodes.len(), self.topology.images.len());
        for n in &self.topology.nodes {
            let _ = write!(s, "node {}", n.id);
            push_f64s(&mut s, &[n.total_cpu, n.total_memory, n.total_storage, n.comm_power, n.comp_power, n.bandwidth]);
            s.push('\n');
        }
        for img in &self.topology.images {
            let _ = writeln!(s, "image {} {:?}", img.id.0, img.size);
        }
        for (id, ep) in &self.episodes {
            let _ = writeln!(s, "episode {id} {}", ep.slots.len());
            for (i, slot) in ep.slots.iter().enumerate() {
                let _ = writeln!(s, "slot {i} {}", slot.len());
                for t in slot {
                    let r = &t.request;
                    let _ = write!(s, "task {}", r.id);
                    push_f64s(&mut s, &[r.data_size, r.cpu_cycles, r.memory]);
                    let _ = write!(s, " {}", r.image_id.0);
                    push_f64s(&mut s, &[r.deadline, r.tx_power]);
                    push_f64s(&mut s, &t.gains);
                    s.push('\n');
                }
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn parse(src: &str) -> Result<Self> {
        let mut lines = Lines::new(src);
        expect_header(&mut lines, MAGIC, VERSION)?;
        let line = lines.expect("`nodes` line")?;
        let mut f = line.fields();
        f.keyword("nodes")?;
        let n = f.usize("node count")?;
        f.keyword("images")?;
        let i = f.usize("image count")?;
        f.finish()?;

        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines.expect("`node` line")?;
            let mut f = line.fields();
            f.keyword("node")?;
            let id = f.usize("node id")?;
            let v = f.f64s(6, "node capacity")?;
            f.finish()?;
            nodes.push(NodeSpec {
                id,
                total_cpu: v[0],
                total_memory: v[1],
                total_storage: v[2],
                comm_power: v[3],
                comp_power: v[4],
                bandwidth: v[5],
            });
        }
        let mut images = Vec::with_capacity(i);
        for _ in 0..i {
            let line = lines.expect("`image` line")?;
            let mut f = line.fields();
            f.keyword("image")?;
            let id = ImageId(f.usize("image id")?);
            let size = f.f64("image size")?;
            f.finish()?;
            images.push(ImageSpec { id, size });
        }

        let mut episodes = Vec::new();
        loop {
            let line = lines.expect("`episode` or `end`")?;
            let mut f = line.fields();
            match f.word("record kind")? {
                "end" => break,
                "episode" => {}
                other => return Err(line.error(format!("expected `episode` or `end`, found `{other}`"))),
            }
            let id = f.u64("episode id")?;
            let slot_count = f.usize("slot count")?;
            f.finish()?;
            let mut slots = Vec::with_capacity(slot_count);
            for s in 0..slot_count {
                let line = lines.expect("`slot` line")?;
                let mut f = line.fields();
                f.keyword("slot")?;
                if f.usize("slot index")? != s {
                    return Err(line.error(format!("slot index out of order, expected {s}")));
                }
                let k = f.usize("task count")?;
                f.finish()?;
                let mut slot = Vec::with_capacity(k);
                for _ in 0..k {
                    let line = lines.expect("`task` line")?;
                    let mut f = line.fields();
                    f.keyword("task")?;
                    let id = f.u64("task id")?;
                    let v = f.f64s(3, "task field")?;
                    let image = ImageId(f.usize("image id")?);
                    let deadline = f.f64("deadline")?;
                    let tx_power = f.f64("tx power")?;
                    let gains = f.f64s(n, "channel gain")?;
                    f.finish()?;
                    slot.push(TaskArrival {
                        request: MicroserviceRequest {
                            id,
                            data_size: v[0],
                            cpu_cycles: v[1],
                            memory: v[2],
                            image_id: image,
                            deadline,
                            tx_power,
                        },
                        gains,
                    });
                }
                slots.push(slot);
            }
            episodes.push((id, EpisodeWorkload { slots }));
        }
        Ok(Trace {
            topology: Topology { nodes, images },
            episodes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
