#include "nonprob/csv.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "nonprob/stats.hpp"

namespace nonprob::csv {

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line,
                       const std::string& what) {
    throw DataError("parse-error",
                    path.string() + ":" + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& field, const std::filesystem::path& path,
                    std::size_t line, const char* column) {
    double value = 0.0;
    const auto* begin = field.data();
    const auto* end = field.data() + field.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end)
        fail(path, line, std::string("bad numeric value for ") + column + ": '" +
                             field + "'");
    return value;
}

long long parse_int(const std::string& field, const std::filesystem::path& path,
                    std::size_t line, const char* column) {
    long long value = 0;
    const auto* begin = field.data();
    const auto* end = field.data() + field.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end)
        fail(path, line, std::string("bad integer value for ") + column + ": '" +
                             field + "'");
    return value;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // row i is file line i+2

    int column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<int>(it - header.begin());
    }
};

Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("file-open", "cannot open " + path.string());
    Table table;
    std::string line;
    if (!std::getline(in, line)) fail(path, 1, "missing header row");
    table.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split(line);
        if (fields.size() != table.header.size())
            fail(path, lineno,
                 "expected " + std::to_string(table.header.size()) + " fields, got " +
                     std::to_string(fields.size()));
        table.rows.push_back(std::move(fields));
    }
    return table;
}

void require_columns(const Table& t, const std::filesystem::path& path,
                     std::initializer_list<const char*> names) {
    for (const char* name : names)
        if (t.column(name) < 0)
            throw DataError("schema", path.string() + ": missing column '" +
                                          std::string(name) + "'");
}

void check_unique_ids(const std::vector<Index>& ids,
                      const std::filesystem::path& path) {
    std::map<Index, std::size_t> seen;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto [it, fresh] = seen.emplace(ids[i], i);
        if (!fresh)
            fail(path, i + 2,
                 "duplicate unit_id " + std::to_string(ids[i]) + " (first at line " +
                     std::to_string(it->second + 2) + ")");
    }
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("file-open", "cannot write " + path.string());
    return out;
}

}  // namespace

void write_population(const std::filesystem::path& path, const Population& pop) {
    auto out = open_out(path);
    out << "unit_id,y,x,z,p_true,mu\n";
    for (Index i = 0; i < pop.size(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        out << i << ',' << stats::format_double(pop.y[u]) << ',' << pop.x[u] << ',';
        if (pop.z) out << stats::format_double((*pop.z)[u]);
        out << ',' << stats::format_double(pop.p_true[u]) << ',';
        if (pop.mu) out << stats::format_double((*pop.mu)[u]);
        out << '\n';
    }
}

Population read_population(const std::filesystem::path& path) {
    const Table t = read_table(path);
    require_columns(t, path, {"unit_id", "y", "x", "z", "p_true", "mu"});
    const int c_id = t.column("unit_id"), c_y = t.column("y"), c_x = t.column("x");
    const int c_z = t.column("z"), c_p = t.column("p_true"), c_mu = t.column("mu");
    Population pop;
    std::vector<Index> ids;
    bool any_z = false, any_mu = false;
    std::vector<double> z, mu;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::size_t line = r + 2;
        ids.push_back(parse_int(row[static_cast<std::size_t>(c_id)], path, line, "unit_id"));
        pop.y.push_back(parse_double(row[static_cast<std::size_t>(c_y)], path, line, "y"));
        pop.x.push_back(static_cast<int>(
            parse_int(row[static_cast<std::size_t>(c_x)], path, line, "x")));
        const double p =
            parse_double(row[static_cast<std::size_t>(c_p)], path, line, "p_true");
        if (!(p >= 0.0 && p <= 1.0)) fail(path, line, "p_true outside [0,1]");
        pop.p_true.push_back(p);
        const auto& zf = row[static_cast<std::size_t>(c_z)];
        const auto& mf = row[static_cast<std::size_t>(c_mu)];
        if (!zf.empty()) {
            any_z = true;
            z.push_back(parse_double(zf, path, line, "z"));
        } else if (any_z) {
            fail(path, line, "z present on earlier rows but empty here");
        }
        if (!mf.empty()) {
            any_mu = true;
            mu.push_back(parse_double(mf, path, line, "mu"));
        } else if (any_mu) {
            fail(path, line, "mu present on earlier rows but empty here");
        }
    }
    check_unique_ids(ids, path);
    if (any_z) {
        if (z.size() != pop.y.size())
            throw DataError("schema", path.string() + ": z present on some rows only");
        pop.z = std::move(z);
    }
    if (any_mu) {
        if (mu.size() != pop.y.size())
            throw DataError("schema", path.string() + ": mu present on some rows only");
        pop.mu = std::move(mu);
    }
    pop.validate();
    return pop;
}

void write_b_sample(const std::filesystem::path& path, const NonProbSample& b) {
    auto out = open_out(path);
    out << "unit_id,y,x";
    if (b.z) out << ",z";
    out << '\n';
    for (std::size_t i = 0; i < b.members.size(); ++i) {
        out << b.members[i] << ',' << stats::format_double(b.y[i]) << ',' << b.x[i];
        if (b.z) out << ',' << stats::format_double((*b.z)[i]);
        out << '\n';
    }
}

NonProbSample read_b_sample(const std::filesystem::path& path) {
    const Table t = read_table(path);
    require_columns(t, path, {"unit_id", "y", "x"});
    const int c_id = t.column("unit_id"), c_y = t.column("y"), c_x = t.column("x");
    const int c_z = t.column("z");
    NonProbSample b;
    if (c_z >= 0) b.z = std::vector<double>();
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::size_t line = r + 2;
        b.members.push_back(
            parse_int(row[static_cast<std::size_t>(c_id)], path, line, "unit_id"));
        b.y.push_back(parse_double(row[static_cast<std::size_t>(c_y)], path, line, "y"));
        b.x.push_back(static_cast<int>(
            parse_int(row[static_cast<std::size_t>(c_x)], path, line, "x")));
        if (c_z >= 0)
            b.z->push_back(parse_double(row[static_cast<std::size_t>(c_z)], path, line, "z"));
    }
    check_unique_ids(b.members, path);
    b.validate();
    return b;
}

void write_s_sample(const std::filesystem::path& path, const ProbSample& s) {
    auto out = open_out(path);
    out << "unit_id,pi,d";
    if (s.y) out << ",y";
    if (s.x) out << ",x";
    if (s.z) out << ",z";
    out << '\n';
    for (std::size_t i = 0; i < s.members.size(); ++i) {
        out << s.members[i] << ',' << stats::format_double(s.pi[i]) << ','
            << stats::format_double(s.d[i]);
        if (s.y) out << ',' << stats::format_double((*s.y)[i]);
        if (s.x) out << ',' << (*s.x)[i];
        if (s.z) out << ',' << stats::format_double((*s.z)[i]);
        out << '\n';
    }
}

ProbSample read_s_sample(const std::filesystem::path& path) {
    const Table t = read_table(path);
    require_columns(t, path, {"unit_id", "pi"});
    const int c_id = t.column("unit_id"), c_pi = t.column("pi"), c_d = t.column("d");
    const int c_y = t.column("y"), c_x = t.column("x"), c_z = t.column("z");
    ProbSample s;
    if (c_y >= 0) s.y = std::vector<double>();
    if (c_x >= 0) s.x = std::vector<int>();
    if (c_z >= 0) s.z = std::vector<double>();
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::size_t line = r + 2;
        s.members.push_back(
            parse_int(row[static_cast<std::size_t>(c_id)], path, line, "unit_id"));
        const double pi =
            parse_double(row[static_cast<std::size_t>(c_pi)], path, line, "pi");
        if (!(pi > 0.0 && pi <= 1.0)) fail(path, line, "pi outside (0,1]");
        s.pi.push_back(pi);
        if (c_d >= 0) {
            const double d =
                parse_double(row[static_cast<std::size_t>(c_d)], path, line, "d");
            if (!(d > 0.0)) fail(path, line, "d must be positive");
            s.d.push_back(d);
        } else {
            s.d.push_back(1.0 / pi);
        }
        if (c_y >= 0)
            s.y->push_back(parse_double(row[static_cast<std::size_t>(c_y)], path, line, "y"));
        if (c_x >= 0)
            s.x->push_back(static_cast<int>(
                parse_int(row[static_cast<std::size_t>(c_x)], path, line, "x")));
        if (c_z >= 0)
            s.z->push_back(parse_double(row[static_cast<std::size_t>(c_z)], path, line, "z"));
    }
    check_unique_ids(s.members, path);
    s.design = PoissonDesign{0};
    s.validate();
    return s;
}

Margins read_margins(const std::filesystem::path& path) {
    const Table t = read_table(path);
    if (t.column("x") >= 0 && t.column("N_x") >= 0) {
        const int c_x = t.column("x"), c_n = t.column("N_x");
        StratumMargins m;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const auto& row = t.rows[r];
            const std::size_t line = r + 2;
            const int label = static_cast<int>(
                parse_int(row[static_cast<std::size_t>(c_x)], path, line, "x"));
            const auto n = parse_int(row[static_cast<std::size_t>(c_n)], path, line, "N_x");
            if (n < 0) fail(path, line, "N_x must be >= 0");
            if (!m.sizes.emplace(label, n).second)
                fail(path, line, "duplicate stratum label " + std::to_string(label));
        }
        return m;
    }
    if (t.column("t_component") >= 0 && t.column("total") >= 0) {
        const int c_c = t.column("t_component"), c_t = t.column("total");
        std::map<long long, double> by_component;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const auto& row = t.rows[r];
            const std::size_t line = r + 2;
            const auto comp =
                parse_int(row[static_cast<std::size_t>(c_c)], path, line, "t_component");
            const double total =
                parse_double(row[static_cast<std::size_t>(c_t)], path, line, "total");
            if (!by_component.emplace(comp, total).second)
                fail(path, line, "duplicate t_component " + std::to_string(comp));
        }
        ComponentTotals totals;
        long long expected = 0;
        for (const auto& [comp, total] : by_component) {
            if (comp != expected)
                throw DataError("schema",
                                path.string() + ": t_component indices must be 0..K-1");
            totals.totals.push_back(total);
            ++expected;
        }
        return totals;
    }
    throw DataError("schema",
                    path.string() + ": margins need columns x,N_x or t_component,total");
}

void write_stratum_margins(const std::filesystem::path& path,
                           const std::map<int, Index>& sizes) {
    auto out = open_out(path);
    out << "x,N_x\n";
    for (const auto& [label, n] : sizes) out << label << ',' << n << '\n';
}

}  // namespace nonprob::csv
