"""Pipelined VHDL-93 emission for LUT graphs.

The microarchitecture: one input register stage, then per layer a register
on every LUT output followed by a balanced adder tree with one register per
stage.  The offset add, rounding shift, and clamp sit combinationally at
each tree root and feed the next layer's LUT addresses.  Shallower nodes
get balancing delay registers so a layer has a single depth.

Latency in cycles is 1 + sum over layers of (1 + adder_depth), with
adder_depth = ceil(log_fanin) of the widest node.  Everything is emitted as
plain text from the graph alone, so a given graph and option set always
produce byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lutir import LutGraph, LutLayer
from .sim import sim_forward, write_vec_file


def ceil_log2(x: int) -> int:
    if x < 1:
        raise ValueError(f"ceil_log2 needs x >= 1, got {x}")
    return (x - 1).bit_length()


@dataclass(frozen=True)
class AdderPlan:
    """Balanced reduction of n_inputs operands by n_add-input adders.

    stages[s] lists the group sizes at stage s; each group becomes one
    registered adder.  depth == len(stages) == ceil(log_n_add(n_inputs))
    for n_inputs >= 2, and 0 for a single operand.
    """

    n_inputs: int
    n_add: int
    stages: tuple[tuple[int, ...], ...]

    @property
    def depth(self) -> int:
        return len(self.stages)


def plan_adder_tree(n_inputs: int, n_add: int) -> AdderPlan:
    if n_inputs < 1:
        raise ValueError(f"adder tree needs >= 1 operand, got {n_inputs}")
    if n_add < 2:
        raise ValueError(f"adder fan-in must be >= 2, got {n_add}")
    stages = []
    cur = n_inputs
    while cur > 1:
        groups = -(-cur // n_add)
        base, rem = divmod(cur, groups)
        stages.append(tuple([base + 1] * rem + [base] * (groups - rem)))
        cur = groups
    return AdderPlan(n_inputs=n_inputs, n_add=n_add, stages=tuple(stages))


def layer_depth(layer: LutLayer, n_add: int) -> int:
    """Adder depth of a layer: its widest node decides."""
    fans = [layer.fan_in(q) for q in range(layer.d_out)]
    fans = [f for f in fans if f >= 1]
    if not fans:
        return 0
    return max(plan_adder_tree(f, n_add).depth for f in fans)


def latency_cycles(graph: LutGraph, n_add: int | None = None) -> int:
    """Input-to-output register stages of the emitted pipeline."""
    total = 1  # input register
    for layer in graph.layers:
        total += 1 + layer_depth(layer, n_add or layer.adder_fanin)
    return total


@dataclass(frozen=True)
class LayerWidths:
    entry_w: int
    acc_w: int


def layer_widths(layer: LutLayer) -> LayerWidths:
    """Fixed-point widths for one layer's datapath.

    The accumulator is sized from the worst-case node sum plus offset plus
    the rounding constant, and never below entry width + ceil(log2(fanin+1))
    so intermediate tree stages cannot wrap.
    """
    entry_w = max((e.entry_bits for e in layer.edges), default=1)
    half = 1 << max(layer.guard_bits - 1, 0) if layer.guard_bits > 0 else 0
    worst = 0
    max_fan = 1
    for q in range(layer.d_out):
        into = layer.edges_into(q)
        max_fan = max(max_fan, len(into))
        bound = sum(int(np.abs(e.table).max()) for e in into) + abs(layer.offsets[q]) + half
        worst = max(worst, bound)
    acc_w = max(
        worst.bit_length() + 2,
        entry_w + ceil_log2(max_fan + 1),
        layer.out_bits + 1,
        layer.guard_bits + 2,
        2,
    )
    return LayerWidths(entry_w=entry_w, acc_w=acc_w)


@dataclass(frozen=True)
class RtlOptions:
    prefix: str = "kanele"
    n_add: int | None = None  # None: take each layer's adder_fanin from the graph
    target_clock_ns: float = 2.0
    tb_vectors: int = 256
    tb_seed: int = 2024


@dataclass
class RtlBundle:
    root: Path
    files: list[str]
    latency: int


def _bin(v: int, width: int) -> str:
    """Two's-complement binary string literal of a given width."""
    return format(v & ((1 << width) - 1), f"0{width}b")


def _offsets_aggregate(layer: LutLayer, acc_w: int) -> str:
    items = [f'{q} => "{_bin(layer.offsets[q], acc_w)}"' for q in range(layer.d_out)]
    return "(" + ", ".join(items) + ")"


def _rom_aggregate(table: np.ndarray, width: int, indent: str) -> str:
    words = [f'"{_bin(int(v), width)}"' for v in table]
    lines = []
    per_line = max(1, 72 // (width + 4))
    for i in range(0, len(words), per_line):
        lines.append(indent + ", ".join(words[i : i + per_line]))
    return "(\n" + ",\n".join(lines) + "\n" + indent[:-2] + ")"


def _config_pkg(p: str, graph: LutGraph, latency: int) -> str:
    first, last = graph.layers[0], graph.layers[-1]
    return f"""-- Generated file; edit the generator, not this.
library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;

package {p}_config_pkg is

  constant C_NUM_LAYERS   : natural := {len(graph.layers)};
  constant C_INPUT_COUNT  : natural := {first.d_in};
  constant C_INPUT_BITS   : natural := {first.in_bits};
  constant C_INPUT_WIDTH  : natural := {first.d_in * first.in_bits};
  constant C_OUTPUT_COUNT : natural := {last.d_out};
  constant C_OUTPUT_BITS  : natural := {last.out_bits};
  constant C_OUTPUT_WIDTH : natural := {last.d_out * last.out_bits};
  constant C_LATENCY      : natural := {latency};

  -- Shared requantization arithmetic: round half away from zero, then
  -- clamp to the unsigned output code range.
  function f_round_shift(v : signed; f : natural) return signed;
  function f_saturate(v : signed; nbits : natural) return unsigned;

end package {p}_config_pkg;

package body {p}_config_pkg is

  function f_round_shift(v : signed; f : natural) return signed is
    variable half : signed(v'length - 1 downto 0);
    variable mag  : signed(v'length - 1 downto 0);
  begin
    if f = 0 then
      return v;
    end if;
    half := (others => '0');
    half(f - 1) := '1';
    if v < 0 then
      mag := -v;
      return -shift_right(mag + half, f);
    else
      return shift_right(v + half, f);
    end if;
  end function f_round_shift;

  function f_saturate(v : signed; nbits : natural) return unsigned is
    constant c_limit : signed(v'length - 1 downto 0) := to_signed(2 ** nbits - 1, v'length);
    variable r : unsigned(nbits - 1 downto 0);
  begin
    if v < 0 then
      r := (others => '0');
    elsif v > c_limit then
      r := (others => '1');
    else
      r := resize(unsigned(v), nbits);
    end if;
    return r;
  end function f_saturate;

end package body {p}_config_pkg;
"""


def _layer_pkg(p: str, l: int, layer: LutLayer, w: LayerWidths, is_last: bool) -> str:
    parts = [
        f"""-- Generated file; edit the generator, not this.
library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;

package {p}_layer{l}_pkg is

  constant L{l}_D_IN    : natural := {layer.d_in};
  constant L{l}_D_OUT   : natural := {layer.d_out};
  constant L{l}_IN_BITS : natural := {layer.in_bits};
  constant L{l}_OUT_BITS : natural := {layer.out_bits};
  constant L{l}_GUARD   : natural := {layer.guard_bits};
  constant L{l}_ENTRY_W : natural := {w.entry_w};
  constant L{l}_ACC_W   : natural := {w.acc_w};

  type t_l{l}_codes is array (0 to L{l}_D_IN - 1) of unsigned(L{l}_IN_BITS - 1 downto 0);
  type t_l{l}_rom is array (0 to 2 ** L{l}_IN_BITS - 1) of signed(L{l}_ENTRY_W - 1 downto 0);
  type t_l{l}_offsets is array (0 to L{l}_D_OUT - 1) of signed(L{l}_ACC_W - 1 downto 0);
"""
    ]
    if is_last:
        parts.append(
            f"  type t_l{l + 1}_codes is array (0 to L{l}_D_OUT - 1) of unsigned(L{l}_OUT_BITS - 1 downto 0);\n"
        )
    parts.append(f"\n  constant C_L{l}_OFFSETS : t_l{l}_offsets := {_offsets_aggregate(layer, w.acc_w)};\n")
    for k, e in enumerate(layer.edges):
        parts.append(
            f"\n  -- edge: input {e.in_neuron} -> node {e.out_neuron}\n"
            f"  constant C_L{l}_E{k}_ROM : t_l{l}_rom := {_rom_aggregate(e.table, w.entry_w, '    ')};\n"
        )
    parts.append(f"\nend package {p}_layer{l}_pkg;\n")
    parts.append(
        f"""
library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;
use work.{p}_layer{l}_pkg.all;

entity {p}_lut_l{l} is
  generic (
    TABLE : t_l{l}_rom
  );
  port (
    addr : in  unsigned(L{l}_IN_BITS - 1 downto 0);
    data : out signed(L{l}_ENTRY_W - 1 downto 0)
  );
end entity {p}_lut_l{l};

architecture rtl of {p}_lut_l{l} is
begin
  data <= TABLE(to_integer(addr));
end architecture rtl;
"""
    )
    return "".join(parts)


@dataclass
class _NodePipe:
    regs: list[tuple[str, str]] = field(default_factory=list)  # (target, expr)
    final: str | None = None  # expr feeding the requantizer; None = constant node


def _node_pipeline(l: int, q: int, edge_ids: list[int], n_add: int, depth: int) -> tuple[list[str], _NodePipe]:
    """Register chain for one node's adder tree, plus alignment delays."""
    pipe = _NodePipe()
    decls: list[str] = []
    if not edge_ids:
        return decls, pipe
    ops = [f"resize(l{l}_lutr_{k}, L{l}_ACC_W)" for k in edge_ids]
    plan = plan_adder_tree(len(edge_ids), n_add)
    for st, sizes in enumerate(plan.stages):
        outs = []
        pos = 0
        for i, size in enumerate(sizes):
            name = f"l{l}_n{q}_s{st}_{i}"
            decls.append(name)
            pipe.regs.append((name, " + ".join(ops[pos : pos + size])))
            pos += size
            outs.append(name)
        ops = outs
    cur = ops[0]
    for j in range(depth - plan.depth):
        name = f"l{l}_n{q}_d{j}"
        decls.append(name)
        pipe.regs.append((name, cur))
        cur = name
    pipe.final = cur
    return decls, pipe


def _top(p: str, graph: LutGraph, n_adds: list[int], widths: list[LayerWidths], latency: int) -> str:
    nl = len(graph.layers)
    uses = "".join(f"use work.{p}_layer{l}_pkg.all;\n" for l in range(nl))
    head = f"""-- Generated file; edit the generator, not this.
library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;
use work.{p}_config_pkg.all;
{uses}
entity {p}_top is
  port (
    clk       : in  std_logic;
    in_valid  : in  std_logic;
    x_in      : in  std_logic_vector(C_INPUT_WIDTH - 1 downto 0);
    out_valid : out std_logic;
    y_out     : out std_logic_vector(C_OUTPUT_WIDTH - 1 downto 0)
  );
end entity {p}_top;

architecture rtl of {p}_top is

"""
    decls: list[str] = []
    body: list[str] = []
    decls.append(f"  signal l0_code : t_l0_codes := (others => (others => '0'));")
    for l in range(1, nl + 1):
        decls.append(f"  signal l{l}_code : t_l{l}_codes;")
    decls.append(f"  signal valid_sr : std_logic_vector(C_LATENCY - 1 downto 0) := (others => '0');")

    # input capture
    body.append("  p_input : process (clk)\n  begin\n    if rising_edge(clk) then\n")
    first = graph.layers[0]
    for pidx in range(first.d_in):
        hi = (pidx + 1) * first.in_bits - 1
        lo = pidx * first.in_bits
        body.append(f"      l0_code({pidx}) <= unsigned(x_in({hi} downto {lo}));\n")
    body.append("    end if;\n  end process p_input;\n\n")

    for l, layer in enumerate(graph.layers):
        w = widths[l]
        depth = layer_depth(layer, n_adds[l])
        for k, e in enumerate(layer.edges):
            decls.append(f"  signal l{l}_lut_{k} : signed(L{l}_ENTRY_W - 1 downto 0);")
            decls.append(f"  signal l{l}_lutr_{k} : signed(L{l}_ENTRY_W - 1 downto 0) := (others => '0');")
            body.append(
                f"  u_l{l}_e{k} : entity work.{p}_lut_l{l}\n"
                f"    generic map (TABLE => C_L{l}_E{k}_ROM)\n"
                f"    port map (addr => l{l}_code({e.in_neuron}), data => l{l}_lut_{k});\n"
            )
        body.append("\n")
        pipes: list[_NodePipe] = []
        for q in range(layer.d_out):
            edge_ids = [k for k, e in enumerate(layer.edges) if e.out_neuron == q]
            node_decls, pipe = _node_pipeline(l, q, edge_ids, n_adds[l], depth)
            for name in node_decls:
                decls.append(f"  signal {name} : signed(L{l}_ACC_W - 1 downto 0) := (others => '0');")
            pipes.append(pipe)
        reg_lines = [f"      l{l}_lutr_{k} <= l{l}_lut_{k};\n" for k in range(len(layer.edges))]
        for pipe in pipes:
            for target, expr in pipe.regs:
                reg_lines.append(f"      {target} <= {expr};\n")
        if reg_lines:
            body.append(f"  p_l{l} : process (clk)\n  begin\n    if rising_edge(clk) then\n")
            body.extend(reg_lines)
            body.append(f"    end if;\n  end process p_l{l};\n\n")
        for q, pipe in enumerate(pipes):
            if pipe.final is None:
                inner = f"C_L{l}_OFFSETS({q})"
            else:
                inner = f"{pipe.final} + C_L{l}_OFFSETS({q})"
            body.append(
                f"  l{l + 1}_code({q}) <= f_saturate(f_round_shift({inner}, L{l}_GUARD), L{l}_OUT_BITS);\n"
            )
        body.append("\n")

    last = graph.layers[-1]
    for q in range(last.d_out):
        hi = (q + 1) * last.out_bits - 1
        lo = q * last.out_bits
        body.append(f"  y_out({hi} downto {lo}) <= std_logic_vector(l{nl}_code({q}));\n")
    body.append(
        "\n  p_valid : process (clk)\n  begin\n    if rising_edge(clk) then\n"
        "      valid_sr <= valid_sr(C_LATENCY - 2 downto 0) & in_valid;\n"
        "    end if;\n  end process p_valid;\n\n"
        "  out_valid <= valid_sr(C_LATENCY - 1);\n"
    )
    return head + "\n".join(decls) + "\n\nbegin\n\n" + "".join(body) + f"\nend architecture rtl;\n"


def _testbench(p: str, graph: LutGraph, n_vectors: int) -> str:
    return f"""-- Generated file; edit the generator, not this.
-- Streams tb/stimulus.vec into the core and checks tb/expected.vec.
-- Run from the bundle root so the relative paths resolve.
library ieee;
use ieee.std_logic_1164.all;
use ieee.numeric_std.all;
use std.textio.all;
use work.{p}_config_pkg.all;

entity {p}_tb is
end entity {p}_tb;

architecture sim of {p}_tb is

  constant CLK_PERIOD   : time := 10 ns;
  constant C_TB_VECTORS : natural := {n_vectors};

  signal clk       : std_logic := '0';
  signal in_valid  : std_logic := '0';
  signal x_in      : std_logic_vector(C_INPUT_WIDTH - 1 downto 0) := (others => '0');
  signal out_valid : std_logic;
  signal y_out     : std_logic_vector(C_OUTPUT_WIDTH - 1 downto 0);
  signal done      : boolean := false;

  function hex_digit(c : character) return std_logic_vector is
  begin
    case c is
      when '0' => return "0000";
      when '1' => return "0001";
      when '2' => return "0010";
      when '3' => return "0011";
      when '4' => return "0100";
      when '5' => return "0101";
      when '6' => return "0110";
      when '7' => return "0111";
      when '8' => return "1000";
      when '9' => return "1001";
      when 'a' | 'A' => return "1010";
      when 'b' | 'B' => return "1011";
      when 'c' | 'C' => return "1100";
      when 'd' | 'D' => return "1101";
      when 'e' | 'E' => return "1110";
      when 'f' | 'F' => return "1111";
      when others =>
        assert false report "bad hex digit in vector file" severity failure;
        return "0000";
    end case;
  end function hex_digit;

  procedure read_hex(l : inout line; v : out std_logic_vector) is
    constant w  : natural := v'length;
    constant nd : natural := (w + 3) / 4;
    variable buf : std_logic_vector(4 * nd - 1 downto 0);
    variable c   : character;
    variable ok  : boolean;
  begin
    for i in 0 to nd - 1 loop
      read(l, c, ok);
      assert ok report "truncated vector line" severity failure;
      buf(4 * (nd - i) - 1 downto 4 * (nd - i - 1)) := hex_digit(c);
    end loop;
    v := buf(w - 1 downto 0);
  end procedure read_hex;

begin

  u_dut : entity work.{p}_top
    port map (
      clk       => clk,
      in_valid  => in_valid,
      x_in      => x_in,
      out_valid => out_valid,
      y_out     => y_out
    );

  p_clk : process
  begin
    while not done loop
      clk <= '0';
      wait for CLK_PERIOD / 2;
      clk <= '1';
      wait for CLK_PERIOD / 2;
    end loop;
    wait;
  end process p_clk;

  p_drive : process
    file f_stim : text open read_mode is "tb/stimulus.vec";
    variable l : line;
    variable v : std_logic_vector(C_INPUT_WIDTH - 1 downto 0);
  begin
    while not endfile(f_stim) loop
      readline(f_stim, l);
      if l.all'length = 0 then
        next;
      end if;
      read_hex(l, v);
      x_in <= v;
      in_valid <= '1';
      wait until rising_edge(clk);
      wait for 1 ns;
    end loop;
    in_valid <= '0';
    wait;
  end process p_drive;

  p_check : process
    file f_exp : text open read_mode is "tb/expected.vec";
    variable l : line;
    variable exp : std_logic_vector(C_OUTPUT_WIDTH - 1 downto 0);
    variable n_pass : natural := 0;
    variable n_fail : natural := 0;
    variable cycle : natural := 0;
    variable first_out : boolean := false;
  begin
    while not endfile(f_exp) loop
      wait until rising_edge(clk);
      cycle := cycle + 1;
      wait for 2 ns;
      if out_valid = '1' then
        if not first_out then
          first_out := true;
          assert cycle = C_LATENCY
            report "first output at cycle " & integer'image(cycle)
                 & ", expected latency " & integer'image(C_LATENCY)
            severity error;
        end if;
        readline(f_exp, l);
        read_hex(l, exp);
        if y_out = exp then
          n_pass := n_pass + 1;
        else
          n_fail := n_fail + 1;
          report "vector " & integer'image(n_pass + n_fail) & " mismatch" severity error;
        end if;
      end if;
    end loop;
    report "checked " & integer'image(n_pass + n_fail) & " vectors, "
         & integer'image(n_fail) & " mismatches" severity note;
    assert n_fail = 0 report "TESTBENCH FAILED" severity failure;
    done <= true;
    wait;
  end process p_check;

  p_watchdog : process
  begin
    wait for CLK_PERIOD * (C_TB_VECTORS + C_LATENCY + 100);
    assert done report "timeout: expected outputs never arrived" severity failure;
    wait;
  end process p_watchdog;

end architecture sim;
"""


def _build_tcl(p: str, graph: LutGraph, opts: RtlOptions) -> str:
    files = [f"rtl/{p}_config_pkg.vhd"]
    files += [f"rtl/{p}_layer{l}_pkg.vhd" for l in range(len(graph.layers))]
    files += [f"rtl/{p}_top.vhd"]
    file_list = " \\\n    ".join(files)
    return f"""# Out-of-context synthesis stub for the generated core.
# Usage: vivado -mode batch -source scripts/build.tcl
set part "xc7a100tcsg324-1"
read_vhdl [list \\
    {file_list}]
synth_design -top {p}_top -part $part -mode out_of_context
create_clock -name clk -period {opts.target_clock_ns} [get_ports clk]
file mkdir reports
report_utilization -file reports/utilization.rpt
report_timing_summary -file reports/timing.rpt
"""


def emit_vhdl(
    graph: LutGraph,
    out_dir: str | Path,
    options: RtlOptions = RtlOptions(),
    vectors: np.ndarray | None = None,
) -> RtlBundle:
    """Write the complete synthesizable bundle plus self-checking testbench.

    `vectors` overrides the default seeded random stimulus.  Expected
    outputs always come from the reference simulator.
    """
    p = options.prefix
    if not p.isidentifier():
        raise ValueError(f"prefix {p!r} is not a valid identifier")
    root = Path(out_dir)
    (root / "rtl").mkdir(parents=True, exist_ok=True)
    (root / "tb").mkdir(parents=True, exist_ok=True)
    (root / "scripts").mkdir(parents=True, exist_ok=True)

    n_adds = [options.n_add or layer.adder_fanin for layer in graph.layers]
    widths = [layer_widths(layer) for layer in graph.layers]
    latency = 1 + sum(1 + layer_depth(layer, n_adds[l]) for l, layer in enumerate(graph.layers))

    first = graph.layers[0]
    if vectors is None:
        rng = np.random.default_rng(options.tb_seed)
        vectors = rng.integers(0, 1 << first.in_bits, size=(options.tb_vectors, first.d_in))
    vectors = np.asarray(vectors, dtype=np.int64)
    expected = sim_forward(graph, vectors)

    files: dict[str, str] = {}
    files[f"rtl/{p}_config_pkg.vhd"] = _config_pkg(p, graph, latency)
    for l, layer in enumerate(graph.layers):
        files[f"rtl/{p}_layer{l}_pkg.vhd"] = _layer_pkg(p, l, layer, widths[l], l == len(graph.layers) - 1)
    files[f"rtl/{p}_top.vhd"] = _top(p, graph, n_adds, widths, latency)
    files[f"tb/{p}_tb.vhd"] = _testbench(p, graph, vectors.shape[0])
    files[f"scripts/build.tcl"] = _build_tcl(p, graph, options)

    for rel, text in files.items():
        (root / rel).write_text(text)
    write_vec_file(root / "tb" / "stimulus.vec", vectors, first.in_bits)
    write_vec_file(root / "tb" / "expected.vec", expected, graph.layers[-1].out_bits)

    rel_files = sorted(files) + ["tb/stimulus.vec", "tb/expected.vec"]
    return RtlBundle(root=root, files=rel_files, latency=latency)


def emit_testbench(
    graph: LutGraph, vectors: np.ndarray, out_dir: str | Path, options: RtlOptions = RtlOptions()
) -> RtlBundle:
    """Regenerate only the testbench and vector files for custom stimulus."""
    root = Path(out_dir)
    (root / "tb").mkdir(parents=True, exist_ok=True)
    vectors = np.asarray(vectors, dtype=np.int64)
    expected = sim_forward(graph, vectors)
    p = options.prefix
    (root / "tb" / f"{p}_tb.vhd").write_text(_testbench(p, graph, vectors.shape[0]))
    write_vec_file(root / "tb" / "stimulus.vec", vectors, graph.layers[0].in_bits)
    write_vec_file(root / "tb" / "expected.vec", expected, graph.layers[-1].out_bits)
    return RtlBundle(
        root=root,
        files=[f"tb/{p}_tb.vhd", "tb/stimulus.vec", "tb/expected.vec"],
        latency=latency_cycles(graph, options.n_add),
    )
