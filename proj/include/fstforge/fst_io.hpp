// Text serialization for transducers.
//
// att_text: one line per transition "src<TAB>dst<TAB>in<TAB>out" where the
// out column space-joins the output symbols ("<eps>" when empty), followed
// by a single line holding the initial state. Symbol tables are rebuilt on
// load in order of first appearance.
//
// dot: a Graphviz digraph with arcs labeled "in:out", for inspection only.
#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "fstforge/errors.hpp"
#include "fstforge/transducer.hpp"

namespace fstforge {

enum class FstFormat { att_text, dot };

inline std::string serialize(const Transducer& t, FstFormat format) {
    std::ostringstream out;
    if (format == FstFormat::att_text) {
        for (StateId s = 0; s < t.num_states(); ++s) {
            for (const auto& a : t.arcs(s)) {
                out << s << '\t' << a.dst << '\t' << t.input_table().name(a.input) << '\t';
                if (a.output.empty()) {
                    out << "<eps>";
                } else {
                    for (std::size_t i = 0; i < a.output.size(); ++i) {
                        if (i) out << ' ';
                        out << t.output_table().name(a.output[i]);
                    }
                }
                out << '\n';
            }
        }
        out << t.initial() << '\n';
        return out.str();
    }

    auto escape = [](const std::string& s) {
        std::string r;
        for (char c : s) {
            if (c == '"' || c == '\\') r.push_back('\\');
            r.push_back(c);
        }
        return r;
    };
    out << "digraph fst {\n  rankdir=LR;\n  node [shape=circle];\n";
    out << "  __start [shape=point];\n  __start -> " << t.initial() << ";\n";
    for (StateId s = 0; s < t.num_states(); ++s) {
        for (const auto& a : t.arcs(s)) {
            std::string label = t.input_table().name(a.input) + ":";
            if (a.output.empty()) {
                label += "ε";
            } else {
                for (SymbolId o : a.output) label += t.output_table().name(o);
            }
            out << "  " << s << " -> " << a.dst << " [label=\"" << escape(label)
                << "\"];\n";
        }
    }
    out << "}\n";
    return out.str();
}

inline Transducer deserialize_att(const std::string& text) {
    SymbolTable in_table, out_table;
    std::vector<RawTransition> transitions;
    StateId initial = 0;
    bool saw_initial = false;
    StateId max_state = 0;

    std::istringstream stream(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(stream, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos
                                                    ? std::string::npos
                                                    : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        auto parse_state = [&](const std::string& s) -> StateId {
            try {
                std::size_t pos = 0;
                unsigned long v = std::stoul(s, &pos);
                if (pos != s.size()) throw std::invalid_argument(s);
                return static_cast<StateId>(v);
            } catch (const std::exception&) {
                throw FormatError(line_no, "expected a state id, got '" + s + "'");
            }
        };
        if (fields.size() == 1) {
            initial = parse_state(fields[0]);
            saw_initial = true;
            max_state = std::max(max_state, initial);
            continue;
        }
        if (fields.size() != 4)
            throw FormatError(line_no, "expected 4 tab-separated fields or an initial-state line");
        RawTransition t;
        t.src = parse_state(fields[0]);
        t.dst = parse_state(fields[1]);
        if (fields[2].empty())
            throw FormatError(line_no, "empty input label");
        t.input = in_table.intern(fields[2]);
        if (fields[3] != "<eps>") {
            std::istringstream toks(fields[3]);
            std::string tok;
            while (toks >> tok) t.output.push_back(out_table.intern(tok));
            if (t.output.empty())
                throw FormatError(line_no, "empty output field");
        }
        max_state = std::max({max_state, t.src, t.dst});
        transitions.push_back(std::move(t));
    }
    if (!saw_initial) throw FormatError(line_no, "missing initial-state line");
    return Transducer(std::move(in_table), std::move(out_table), max_state + 1, initial,
                      transitions);
}

}  // namespace fstforge
