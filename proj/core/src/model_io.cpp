#include "ppgbp/model_io.hpp"

#include "ppgbp/csv_io.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>

namespace ppgbp {

void write_model_json(const std::filesystem::path& path, const ModelRecord& record) {
    validate_model(record.model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());

    // Written by hand so coefficient values keep their 17-digit form.
    auto list = [](const std::vector<double>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ", ";
            s += format_double17(v[i]);
        }
        return s + "]";
    };

    out << "{\n";
    out << "  \"feature\": \"" << to_string(record.feature) << "\",\n";
    out << "  \"interval_label\": \"" << record.interval_label << "\",\n";
    out << "  \"n_a\": " << record.model.orders.n_a << ",\n";
    out << "  \"n_b\": " << record.model.orders.n_b << ",\n";
    out << "  \"n_k\": " << record.model.orders.n_k << ",\n";
    out << "  \"a\": " << list(record.model.a) << ",\n";
    out << "  \"b\": " << list(record.model.b) << ",\n";
    out << "  \"fit_mse\": " << format_double17(record.model.fit_mse) << ",\n";
    out << "  \"n_samples_used\": " << record.model.n_samples_used << "\n";
    out << "}\n";
}

ModelRecord read_model_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    nlohmann::json j;
    in >> j;

    ModelRecord record;
    record.feature = feature_from_string(j.at("feature").get<std::string>());
    record.interval_label = j.at("interval_label").get<std::string>();
    record.model.orders.n_a = j.at("n_a").get<int>();
    record.model.orders.n_b = j.at("n_b").get<int>();
    record.model.orders.n_k = j.at("n_k").get<int>();
    record.model.a = j.at("a").get<std::vector<double>>();
    record.model.b = j.at("b").get<std::vector<double>>();
    record.model.fit_mse = j.at("fit_mse").get<double>();
    record.model.n_samples_used = j.at("n_samples_used").get<std::size_t>();
    validate_model(record.model);
    return record;
}

} // namespace ppgbp
