use kernel_model::{kernel_cost, microkernel_exec, partition_kernel, GrainFlavor};
use proptest::prelude::*;
use sw_sim::*;

fn cfg() -> MachineConfig {
    MachineConfig::default()
}

fn programs(cfg: &MachineConfig, entries: Vec<(usize, usize, Program)>) -> Vec<Program> {
    let mut p = vec![Vec::new(); cfg.num_cpes()];
    for (r, c, prog) in entries {
        p[r * cfg.grid_cols + c] = prog;
    }
    p
}

fn get(operand: Operand, base: usize, bytes: usize, ldm: usize, tag: u32) -> TraceOp {
    TraceOp::DmaGet {
        operand,
        main: MainRegion::contiguous(base, bytes),
        ldm,
        tag,
    }
}

fn put(base: usize, bytes: usize, ldm: usize, tag: u32) -> TraceOp {
    TraceOp::DmaPut {
        operand: Operand::Out,
        main: MainRegion::contiguous(base, bytes),
        ldm,
        tag,
    }
}

fn stats(l: &CostLedger, r: usize, c: usize) -> &ElementStats {
    &l.elements[r * 8 + c]
}

#[test]
fn immediate_wait_stalls_for_the_whole_transfer() {
    let cfg = cfg();
    let mut mem = MainMemory::new(1 << 16);
    let progs = programs(&cfg, vec![(0, 0, vec![get(Operand::In, 0, 4096, 0, 1), TraceOp::DmaWait { tag: 1 }])]);
    let l = run_programs(&cfg, TbShape::Tb1x1, &progs, &mut mem).unwrap();
    let d = cfg.dma_duration_cycles(4096);
    let s = stats(&l, 0, 0);
    assert_eq!(s.dma_stall.inp, d);
    assert_eq!(s.dma_busy_cycles, d);
    assert_eq!(l.total_cycles, cfg.dma_issue_cycles + d);
}

#[test]
fn concurrent_transfers_share_bandwidth() {
    let cfg = cfg();
    let mut mem = MainMemory::new(1 << 16);
    let prog = |base| vec![get(Operand::In, base, 4096, 0, 1), TraceOp::DmaWait { tag: 1 }];
    let progs = programs(&cfg, vec![(0, 0, prog(0)), (0, 1, prog(8192))]);
    let l = run_programs(&cfg, TbShape::Tb1x1, &progs, &mut mem).unwrap();
    let expected = cfg.dma_issue_cycles + cfg.dma_startup_cycles + (8192.0 / cfg.dma_bytes_per_cycle()).ceil() as u64;
    assert_eq!(l.total_cycles, expected);
    assert_eq!(stats(&l, 0, 0).finish_cycle, stats(&l, 0, 1).finish_cycle);
}

#[test]
fn narrow_rows_occupy_whole_bus_transactions() {
    let cfg = cfg();
    let mut mem = MainMemory::new(1 << 16);
    let strided = MainRegion {
        base: 0,
        rows: 32,
        row_bytes: 16,
        stride: 256,
    };
    let op = TraceOp::DmaGet {
        operand: Operand::In,
        main: strided,
        ldm: 0,
        tag: 1,
    };
    let progs = programs(&cfg, vec![(0, 0, vec![op, TraceOp::DmaWait { tag: 1 }])]);
    let l = run_programs(&cfg, TbShape::Tb1x1, &progs, &mut mem).unwrap();
    assert_eq!(cfg.dma_bus_bytes(&strided), 32 * 128);
    assert_eq!(stats(&l, 0, 0).dma_stall.inp, cfg.dma_duration_cycles(32 * 128));
    assert_eq!(l.dma_bytes.inp, 32 * 16);
}

#[test]
fn prefetch_behind_compute_hides_transfer() {
    let cfg = cfg();
    let mut mem = MainMemory::new(1 << 16);
    let kernel = TraceOp::Microkernel {
        flavor: GrainFlavor::Local,
        reordered: true,
        flt: 8192,
        inp: 16384,
        out: 24576,
        k: 4,
        n: 16,
        c: 64,
    };
    let progs = programs(
        &cfg,
        vec![(0, 0, vec![get(Operand::In, 0, 1024, 0, 1), kernel, TraceOp::DmaWait { tag: 1 }])],
    );
    let l = run_programs(&cfg, TbShape::Tb1x1, &progs, &mut mem).unwrap();
    assert_eq!(stats(&l, 0, 0).dma_stall.inp, 0);
}

#[test]
fn data_moves_through_ldm_and_back() {
    let cfg = cfg();
    let mut mem = MainMemory::new(0);
    let src = mem.push_f32(&(0..16).map(|i| i as f32).collect::<Vec<_>>());
    let dst = mem.alloc_f32(16);
    let strided = TraceOp::DmaGet {
        operand: Operand::In,
        main: MainRegion {
            base: src,
            rows: 4,
            row_bytes: 8,
            stride: 16,
        },
        ldm: 0,
        tag: 0,
    };
    let progs = programs(
        &cfg,
        vec![(3, 4, vec![strided, TraceOp::DmaWait { tag: 0 }, put(dst, 32, 0, 1), TraceOp::DmaWait { tag: 1 }])],
    );
    run_programs(&cfg, TbShape::Tb1x1, &progs, &mut mem).unwrap();
    assert_eq!(&mem.read_f32(dst, 8), &[0.0, 1.0, 4.0, 5.0, 8.0, 9.0, 12.0, 13.0]);
}

fn expect_violation(r: Result<CostLedger, SimError>, needle: &str) {
    match r {
        Err(SimError::ProtocolViolation { reason, .. }) => assert!(reason.contains(needle), "{reason}"),
        other => panic!("expected violation containing `{needle}`, got {other:?}"),
    }
}

#[test]
fn broadcast_outside_tb_is_rejected() {
    let cfg = cfg();
    let mut mem = MainMemory::new(64);
    let progs = programs(&cfg, vec![(0, 0, vec![TraceOp::BcastRow { ldm: 0, bytes: 32 }])]);
    expect_violation(run_programs(&cfg, TbShape::Tb1x1, &progs, &mut mem), "no row peers");
    let progs = programs(&cfg, vec![(0, 0, vec![TraceOp::BcastCol { ldm: 0, bytes: 32 }])]);
    expect_violation(run_programs(&cfg, TbShape::Tb1x8, &progs, &mut mem), "no col peers");
    let progs = programs(
        &cfg,
        vec![(0, 0, vec![TraceOp::Recv {
            axis: CommAxis::Col,
            ldm: 0,
            bytes: 32,
        }])],
    );
    expect_violation(run_programs(&cfg, TbShape::Tb1x8, &progs, &mut mem), "no col peers");
    let progs = programs(&cfg, vec![(1, 0, vec![TraceOp::LocalBarrier { tb_id: 0 }])]);
    expect_violation(run_programs(&cfg, TbShape::Tb1x8, &progs, &mut mem), "barrier on TB 0");
}

#[test]
fn message_sizes_must_be_whole_messages() {
    let cfg = cfg();
    let mut mem = MainMemory::new(64);
    let progs = programs(&cfg, vec![(0, 0, vec![TraceOp::BcastRow { ldm: 0, bytes: 48 }])]);
    expect_violation(run_programs(&cfg, TbShape::Tb1x8, &progs, &mut mem), "multiple of 32");
}

#[test]
fn sender_blocks_once_receivers_and_send_queue_fill() {
    let cfg = cfg();
    let mut mem = MainMemory::new(64);
    let progs = programs(&cfg, vec![(0, 0, vec![TraceOp::BcastRow { ldm: 0, bytes: 32 * 20 }])]);
    let err = run_programs(&cfg, TbShape::Tb1x8, &progs, &mut mem).unwrap_err();
    let SimError::DeadlockDetected { blocked } = err else {
        panic!("expected deadlock, got {err:?}");
    };
    assert_eq!(blocked, vec![(CpeId::new(0, 0), BlockReason::Send { occupancy: 6 })]);
}

#[test]
fn ten_messages_buffer_and_the_eleventh_blocks() {
    let cfg = cfg();
    let mut mem = MainMemory::new(64);
    let ten = programs(&cfg, vec![(0, 0, vec![TraceOp::BcastRow { ldm: 0, bytes: 32 * 10 }])]);
    expect_violation(run_programs(&cfg, TbShape::Tb1x8, &ten, &mut mem), "undelivered");
    let eleven = programs(&cfg, vec![(0, 0, vec![TraceOp::BcastRow { ldm: 0, bytes: 32 * 11 }])]);
    assert!(matches!(
        run_programs(&cfg, TbShape::Tb1x8, &eleven, &mut mem),
        Err(SimError::DeadlockDetected { .. })
    ));
}

#[test]
fn flooding_receiver_is_throttled_not_lost() {
    let cfg = cfg();
    let mut mem = MainMemory::new(0);
    let data: Vec<f32> = (0..512).map(|i| i as f32 * 0.5).collect();
    let src = mem.push_f32(&data);
    let dst = mem.alloc_f32(512 * 7);
    let bytes = 2048;
    let mut entries = vec![(
        2,
        0,
        vec![
            get(Operand::In, src, bytes, 0, 0),
            TraceOp::DmaWait { tag: 0 },
            TraceOp::BcastRow { ldm: 0, bytes },
        ],
    )];
    for j in 1..8 {
        entries.push((
            2,
            j,
            vec![
                TraceOp::Recv {
                    axis: CommAxis::Row,
                    ldm: 4096,
                    bytes,
                },
                put(dst + (j - 1) * bytes, bytes, 4096, 1),
                TraceOp::DmaWait { tag: 1 },
            ],
        ));
    }
    let l = run_programs(&cfg, TbShape::Tb1x8, &programs(&cfg, entries), &mut mem).unwrap();
    for j in 0..7 {
        assert_eq!(mem.read_f32(dst + j * bytes, 512), data);
    }
    assert_eq!(l.reg_messages, 64);
    assert_eq!(l.reg_deliveries, 64 * 7);
    assert!(l.max_send_occupancy <= cfg.send_buf_cap);
    assert!(l.max_recv_occupancy <= cfg.row_recv_cap);
}

#[test]
fn column_broadcast_in_full_grid_block() {
    let cfg = cfg();
    let mut mem = MainMemory::new(0);
    let src = mem.push_f32(&[7.0; 8]);
    let dst = mem.alloc_f32(8 * 8);
    let mut entries = vec![(
        0,
        5,
        vec![get(Operand::Flt, src, 32, 0, 0), TraceOp::DmaWait { tag: 0 }, TraceOp::BcastCol { ldm: 0, bytes: 32 }],
    )];
    for i in 1..8 {
        entries.push((
            i,
            5,
            vec![
                TraceOp::Recv {
                    axis: CommAxis::Col,
                    ldm: 64,
                    bytes: 32,
                },
                put(dst + i * 32, 32, 64, 0),
                TraceOp::DmaWait { tag: 0 },
            ],
        ));
    }
    run_programs(&cfg, TbShape::Tb8x8, &programs(&cfg, entries), &mut mem).unwrap();
    assert_eq!(mem.read_f32(dst + 32, 56), vec![7.0; 56]);
    assert_eq!(mem.read_f32(dst, 8), vec![0.0; 8]);
}

#[test]
fn unreceived_messages_are_reported() {
    let cfg = cfg();
    let mut mem = MainMemory::new(64);
    let progs = programs(&cfg, vec![(0, 0, vec![TraceOp::BcastRow { ldm: 0, bytes: 32 }])]);
    expect_violation(run_programs(&cfg, TbShape::Tb1x8, &progs, &mut mem), "undelivered");
}

#[test]
fn barrier_aligns_members() {
    let cfg = cfg();
    let mut mem = MainMemory::new(64);
    let mut entries = vec![(0, 0, vec![TraceOp::ZeroFill { ldm: 0, bytes: 32 * 100 }, TraceOp::LocalBarrier { tb_id: 0 }])];
    for j in 1..8 {
        entries.push((0, j, vec![TraceOp::LocalBarrier { tb_id: 0 }]));
    }
    let l = run_programs(&cfg, TbShape::Tb1x8, &programs(&cfg, entries), &mut mem).unwrap();
    for j in 0..8 {
        assert_eq!(stats(&l, 0, j).finish_cycle, 100 + cfg.barrier_cycles);
    }
    assert_eq!(stats(&l, 0, 3).barrier_stall_cycles, 100);
}

#[test]
fn missing_barrier_member_deadlocks() {
    let cfg = cfg();
    let mut mem = MainMemory::new(64);
    let progs = programs(&cfg, vec![(0, 0, vec![TraceOp::LocalBarrier { tb_id: 0 }])]);
    assert!(matches!(
        run_programs(&cfg, TbShape::Tb1x8, &progs, &mut mem),
        Err(SimError::DeadlockDetected { .. })
    ));
}

#[test]
fn ldm_and_memory_bounds() {
    let cfg = cfg();
    let mut mem = MainMemory::new(1 << 17);
    let progs = programs(&cfg, vec![(0, 0, vec![get(Operand::In, 0, 65536, 32, 0)])]);
    assert!(matches!(
        run_programs(&cfg, TbShape::Tb1x1, &progs, &mut mem),
        Err(SimError::LdmOverflow { .. })
    ));
    let progs = programs(&cfg, vec![(0, 0, vec![get(Operand::In, (1 << 17) - 16, 32, 0, 0)])]);
    assert!(matches!(
        run_programs(&cfg, TbShape::Tb1x1, &progs, &mut mem),
        Err(SimError::MainMemoryOutOfBounds { .. })
    ));
}

#[test]
fn wait_discipline() {
    let cfg = cfg();
    let mut mem = MainMemory::new(4096);
    let progs = programs(&cfg, vec![(0, 0, vec![TraceOp::DmaWait { tag: 9 }])]);
    assert!(matches!(
        run_programs(&cfg, TbShape::Tb1x1, &progs, &mut mem),
        Err(SimError::DanglingWait { tag: 9, .. })
    ));
    let progs = programs(&cfg, vec![(0, 0, vec![get(Operand::In, 0, 64, 0, 1)])]);
    expect_violation(run_programs(&cfg, TbShape::Tb1x1, &progs, &mut mem), "never waited");
    let early_use = vec![
        get(Operand::In, 0, 64, 0, 1),
        TraceOp::Convert {
            src: 0,
            dst: 1024,
            count: 16,
            dir: ConvertDir::F32ToF64,
            order: ConvertOrder::Forward,
        },
        TraceOp::DmaWait { tag: 1 },
    ];
    let progs = programs(&cfg, vec![(0, 0, early_use)]);
    expect_violation(run_programs(&cfg, TbShape::Tb1x1, &progs, &mut mem), "before its wait");
}

fn convert_roundtrip(widen: ConvertOrder) -> Vec<f32> {
    let cfg = cfg();
    let mut mem = MainMemory::new(0);
    let data: Vec<f32> = (1..=32).map(|i| i as f32 / 3.0).collect();
    let src = mem.push_f32(&data);
    let dst = mem.alloc_f32(32);
    let ops = vec![
        get(Operand::In, src, 128, 0, 0),
        TraceOp::DmaWait { tag: 0 },
        TraceOp::Convert {
            src: 0,
            dst: 0,
            count: 32,
            dir: ConvertDir::F32ToF64,
            order: widen,
        },
        TraceOp::Convert {
            src: 0,
            dst: 0,
            count: 32,
            dir: ConvertDir::F64ToF32,
            order: ConvertOrder::Forward,
        },
        put(dst, 128, 0, 1),
        TraceOp::DmaWait { tag: 1 },
    ];
    run_programs(&cfg, TbShape::Tb1x1, &programs(&cfg, vec![(0, 0, ops)]), &mut mem).unwrap();
    assert_eq!(mem.read_f32(src, 32), data);
    mem.read_f32(dst, 32)
}

#[test]
fn in_place_widening_needs_reverse_order() {
    let data: Vec<f32> = (1..=32).map(|i| i as f32 / 3.0).collect();
    assert_eq!(convert_roundtrip(ConvertOrder::Reverse), data);
    assert_ne!(convert_roundtrip(ConvertOrder::Forward), data);
}

#[test]
fn microkernel_matches_reference_and_cost_model() {
    let cfg = cfg();
    let (k, n, c) = (6, 20, 5);
    let flt: Vec<f64> = (0..c * k).map(|i| (i as f64).sin()).collect();
    let inp: Vec<f64> = (0..c * n).map(|i| (i as f64 * 0.7).cos()).collect();
    let mut expected = vec![0.0; k * n];
    microkernel_exec(&flt, &inp, &mut expected, k, n, c).unwrap();

    // Stage f64 operands through main memory as raw bytes.
    let mut mem = MainMemory::new(0);
    let as_f32_pairs = |v: &[f64]| -> Vec<f32> {
        v.iter()
            .flat_map(|x| {
                let b = x.to_le_bytes();
                [
                    f32::from_le_bytes(b[0..4].try_into().unwrap()),
                    f32::from_le_bytes(b[4..8].try_into().unwrap()),
                ]
            })
            .collect()
    };
    let fb = mem.push_f32(&as_f32_pairs(&flt));
    let ib = mem.push_f32(&as_f32_pairs(&inp));
    let ob = mem.alloc_f32(2 * k * n);
    let (lf, li, lo) = (0, 8 * c * k, 8 * (c * k + c * n));
    let ops = vec![
        get(Operand::Flt, fb, 8 * c * k, lf, 0),
        get(Operand::In, ib, 8 * c * n, li, 0),
        TraceOp::DmaWait { tag: 0 },
        TraceOp::ZeroFill { ldm: lo, bytes: 8 * k * n },
        TraceOp::Microkernel {
            flavor: GrainFlavor::Local,
            reordered: true,
            flt: lf,
            inp: li,
            out: lo,
            k,
            n,
            c,
        },
        put(ob, 8 * k * n, lo, 1),
        TraceOp::DmaWait { tag: 1 },
    ];
    let l = run_programs(&cfg, TbShape::Tb1x1, &programs(&cfg, vec![(0, 0, ops)]), &mut mem).unwrap();
    let raw = &mem.bytes()[ob..ob + 8 * k * n];
    let got: Vec<f64> = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    assert_eq!(got, expected);
    let kc = kernel_cost(&partition_kernel(k, n).unwrap(), c, true, GrainFlavor::Local, &cfg.kernel_costs());
    let s = stats(&l, 0, 0);
    assert_eq!(s.p0_slots, kc.p0_slots);
    assert_eq!(s.flops, 2 * (k * n * c) as u64);
    assert!(s.busy_cycles >= kc.cycles);
}

#[test]
fn text_trace_runs() {
    let cfg = cfg();
    let text = "\
cpe 0 0
dma_get op=in main=0,2,64,128 ldm=0 tag=3
dma_wait tag=3
bcast_row ldm=0 bytes=128
cpe 0 1
recv axis=row ldm=0 bytes=128
";
    let mut progs = vec![Vec::new(); 64];
    for (cpe, ops) in parse_trace(text).unwrap() {
        progs[cpe.index(&cfg)] = ops;
    }
    let mut mem = MainMemory::new(4096);
    // Other row members never receive, so their buffers keep the messages.
    assert!(run_programs(&cfg, TbShape::Tb1x8, &progs, &mut mem).is_err());
    let text_all: String = (1..8).map(|j| format!("cpe 0 {j}\nrecv axis=row ldm=0 bytes=128\n")).collect();
    let mut progs = vec![Vec::new(); 64];
    for (cpe, ops) in parse_trace(&format!("{}{}", &text[..text.find("cpe 0 1").unwrap()], text_all)).unwrap() {
        progs[cpe.index(&cfg)] = ops;
    }
    let l = run_programs(&cfg, TbShape::Tb1x8, &progs, &mut mem).unwrap();
    assert_eq!(l.dma_bytes.inp, 128);
    assert_eq!(l.reg_deliveries, 28);
}

#[test]
fn ledger_serializes() {
    let cfg = cfg();
    let mut mem = MainMemory::new(1024);
    let progs = programs(&cfg, vec![(0, 0, vec![get(Operand::Flt, 0, 64, 0, 0), TraceOp::DmaWait { tag: 0 }])]);
    let l = run_programs(&cfg, TbShape::Tb1x1, &progs, &mut mem).unwrap();
    let v: serde_json::Value = serde_json::from_str(&l.to_json()).unwrap();
    assert_eq!(v["dma_bytes"]["flt"], 64);
    assert_eq!(v["tbs"].as_array().unwrap().len(), 64);
}

#[derive(Debug, Clone)]
struct Xfer {
    cpe: usize,
    bytes: usize,
    wait_now: bool,
}

fn xfer() -> impl Strategy<Value = Xfer> {
    (0usize..64, 1usize..64, any::<bool>()).prop_map(|(cpe, chunks, wait_now)| Xfer {
        cpe,
        bytes: chunks * 32,
        wait_now,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dma_traffic_is_conserved_and_bandwidth_bounded(xfers in prop::collection::vec(xfer(), 1..40)) {
        let cfg = cfg();
        let mut progs = vec![Vec::new(); 64];
        let mut slots = vec![0usize; 64];
        let mut total = 0u64;
        for (i, x) in xfers.iter().enumerate() {
            let ldm = slots[x.cpe] * 2048;
            if ldm + x.bytes > cfg.ldm_bytes {
                continue;
            }
            slots[x.cpe] += 1;
            let tag = i as u32;
            progs[x.cpe].push(get(Operand::In, i * 2048, x.bytes, ldm, tag));
            if x.wait_now {
                progs[x.cpe].push(TraceOp::DmaWait { tag });
            }
            total += x.bytes as u64;
        }
        for prog in progs.iter_mut() {
            let tags: Vec<u32> = prog
                .iter()
                .filter_map(|op| match op {
                    TraceOp::DmaGet { tag, .. } => Some(*tag),
                    _ => None,
                })
                .collect();
            let waited: Vec<u32> = prog
                .iter()
                .filter_map(|op| match op {
                    TraceOp::DmaWait { tag } => Some(*tag),
                    _ => None,
                })
                .collect();
            for t in tags.into_iter().filter(|t| !waited.contains(t)) {
                prog.push(TraceOp::DmaWait { tag: t });
            }
        }
        let mut mem = MainMemory::new(40 * 2048);
        let l = run_programs(&cfg, TbShape::Tb1x1, &progs, &mut mem).unwrap();
        prop_assert_eq!(l.dma_bytes.total(), total);
        let bound = (total as f64 / cfg.dma_bytes_per_cycle()).floor() as u64;
        prop_assert!(l.total_cycles >= bound);
        let again = run_programs(&cfg, TbShape::Tb1x1, &progs, &mut mem).unwrap();
        prop_assert_eq!(l, again);
    }

    #[test]
    fn trace_text_roundtrips(ops in prop::collection::vec((0usize..4096, 1usize..64, 0u32..8), 0..20)) {
        let prog: Program = ops
            .iter()
            .flat_map(|&(ldm, chunks, tag)| {
                [get(Operand::Flt, ldm * 8, chunks * 32, ldm, tag), TraceOp::DmaWait { tag }]
            })
            .collect();
        let text = format_trace([(CpeId::new(1, 2), prog.as_slice())]);
        let parsed = parse_trace(&text).unwrap();
        if prog.is_empty() {
            prop_assert!(parsed.is_empty());
        } else {
            prop_assert_eq!(parsed, vec![(CpeId::new(1, 2), prog)]);
        }
    }
}
