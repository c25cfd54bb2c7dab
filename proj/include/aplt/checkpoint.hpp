#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "cluster.hpp"
#include "error.hpp"
#include "matrix.hpp"
#include "nn.hpp"

// Text checkpoint, one token group per line, values printed with 17
// significant digits so a load reproduces every double exactly:
//
//   aplt-checkpoint 1
//   model <input_dim> <hidden> <embed> <classes> <feature_norm 0|1>
//   tensor <name> <rows> <cols>          (x6: w1 b1 w2 b2 wh bh, in order)
//   <row values, space separated>        (one line per row)
//   bank none | bank <classes> <dim> <build_epoch>
//   counts <n_0> ... <n_{C-1}>           (only when a bank is present)
//   <prototype row>                      (x classes)
//   end

namespace aplt::checkpoint {

struct Checkpoint {
    nn::EncoderModel model;
    std::optional<cluster::PrototypeBank> bank;
};

namespace detail {

inline void write_matrix(std::ostream& out, const Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << ' ';
            out << format_double(row[c]);
        }
        out << '\n';
    }
}

inline void read_matrix(std::istream& in, Matrix& m) {
    for (double& v : m.values()) {
        std::string tok;
        if (!(in >> tok)) throw Error(ErrorKind::parse_error, "checkpoint: truncated tensor");
        std::size_t used = 0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size()) throw Error(ErrorKind::parse_error, "checkpoint: bad number '" + tok + "'");
    }
}

inline void expect(std::istream& in, const std::string& word) {
    std::string tok;
    if (!(in >> tok) || tok != word)
        throw Error(ErrorKind::parse_error, "checkpoint: expected '" + word + "', got '" + tok + "'");
}

}  // namespace detail

inline void write(std::ostream& out, const nn::EncoderModel& m, const cluster::PrototypeBank* bank) {
    const auto& s = m.shape;
    out << "aplt-checkpoint 1\n";
    out << "model " << s.input_dim << ' ' << s.hidden_dim << ' ' << s.embed_dim << ' ' << s.num_classes << ' '
        << (s.feature_norm ? 1 : 0) << '\n';
    const auto tensors = m.params.tensors();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        out << "tensor " << nn::ParamSet::names[t] << ' ' << tensors[t]->rows() << ' ' << tensors[t]->cols() << '\n';
        detail::write_matrix(out, *tensors[t]);
    }
    if (bank == nullptr) {
        out << "bank none\n";
    } else {
        out << "bank " << bank->prototypes.rows() << ' ' << bank->prototypes.cols() << ' ' << bank->build_epoch
            << '\n';
        out << "counts";
        for (auto n : bank->counts) out << ' ' << n;
        out << '\n';
        detail::write_matrix(out, bank->prototypes);
    }
    out << "end\n";
}

inline Checkpoint read(std::istream& in) {
    Checkpoint ck;
    detail::expect(in, "aplt-checkpoint");
    detail::expect(in, "1");
    detail::expect(in, "model");
    auto& s = ck.model.shape;
    int norm = 0;
    if (!(in >> s.input_dim >> s.hidden_dim >> s.embed_dim >> s.num_classes >> norm))
        throw Error(ErrorKind::parse_error, "checkpoint: bad model line");
    s.feature_norm = norm != 0;
    ck.model.params = nn::ParamSet::zeros(s);
    auto tensors = ck.model.params.tensors();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        detail::expect(in, "tensor");
        detail::expect(in, nn::ParamSet::names[t]);
        std::size_t r = 0, c = 0;
        if (!(in >> r >> c) || r != tensors[t]->rows() || c != tensors[t]->cols())
            throw Error(ErrorKind::dimension_mismatch,
                        std::string("checkpoint: tensor ") + nn::ParamSet::names[t] + " shape");
        detail::read_matrix(in, *tensors[t]);
    }
    detail::expect(in, "bank");
    std::string tok;
    if (!(in >> tok)) throw Error(ErrorKind::parse_error, "checkpoint: truncated bank line");
    if (tok != "none") {
        cluster::PrototypeBank bank;
        std::size_t rows = 0, cols = 0;
        try {
            rows = std::stoul(tok);
        } catch (const std::exception&) {
            throw Error(ErrorKind::parse_error, "checkpoint: bad bank line");
        }
        if (!(in >> cols >> bank.build_epoch)) throw Error(ErrorKind::parse_error, "checkpoint: bad bank line");
        detail::expect(in, "counts");
        bank.counts.resize(rows);
        for (auto& n : bank.counts)
            if (!(in >> n)) throw Error(ErrorKind::parse_error, "checkpoint: bad counts");
        bank.prototypes = Matrix(rows, cols);
        detail::read_matrix(in, bank.prototypes);
        ck.bank = std::move(bank);
    }
    detail::expect(in, "end");
    return ck;
}

inline void save(const std::string& path, const nn::EncoderModel& m, const cluster::PrototypeBank* bank) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::io_error, "cannot open " + path + " for writing");
    write(f, m, bank);
    if (!f) throw Error(ErrorKind::io_error, "write failed for " + path);
}

inline Checkpoint load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::io_error, "cannot open " + path);
    return read(f);
}

}  // namespace aplt::checkpoint
