fn main() {
    let src = "\
states: qstart qpush qpop0 qpop1 qacc
alphabet: 0 1 $ _
init: qstart
accept: qacc
meta: stack=8 steps=64 work=0
qstart _ _ _ -> qpush _ 0 +1 0 push:$
qstart 0 _ _ -> qpush _ 0 +1 0 push:$
qstart 1 _ _ -> qpush _ 0 +1 0 push:$
qpush 0 _ _ -> qpush _ +1 +1 0 push:0
qpush 1 _ _ -> qpush _ +1 +1 0 push:1
qpush _ _ _ -> qpop0 _ 0 -1 0 -
qpop0 _ 0 _ -> qpop0 _ 0 -1 0 pop
qpop0 _ 1 _ -> qpop1 _ 0 -1 0 pop
qpop1 _ 0 _ -> qpop1 _ 0 -1 0 pop
qpop1 _ 1 _ -> qpop0 _ 0 -1 0 pop
qpop0 _ $ _ -> qacc _ 0 0 0 -
";
    let m = tdlab_core::auxsa::StackMachine::parse(src).unwrap();
    let reg = tdlab_core::auxsa::regularize_machine(&m, 2, 1).unwrap();
    eprintln!("reg: states={} rows={} step_bound={:?}", reg.states.len(), reg.transitions.len(), reg.meta.step_bound);
    let t = std::time::Instant::now();
    let bundle = tdlab_core::auxsa::compile_hardness(&reg, &[0]).unwrap();
    eprintln!("compiled in {:?}: vars={} clauses={}", t.elapsed(), bundle.formula.num_vars(), bundle.formula.clauses().len());
    let t = std::time::Instant::now();
    let sat = tdlab_core::oracle::sat_oracle(&bundle.formula, &[]).unwrap();
    eprintln!("solved in {:?}: sat={}", t.elapsed(), sat);
}
