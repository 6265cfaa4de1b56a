#include "perclab/records.hpp"

namespace perclab {

std::string csv_header() { return "event,d,s,L,N,p,q,mean,stderr,n,seed"; }

std::string to_csv_row(const EstimateRecord& r) {
  std::string out;
  out.reserve(128);
  out += r.event;
  out += ',';
  out += fmt_int(r.d);
  out += ',';
  out += fmt_int(r.s);
  out += ',';
  out += fmt_int(r.L);
  out += ',';
  out += fmt_int(r.N);
  out += ',';
  out += fmt_double(r.p);
  out += ',';
  out += fmt_double(r.q);
  out += ',';
  out += fmt_double(r.mean);
  out += ',';
  out += fmt_double(r.se);
  out += ',';
  out += fmt_int(r.n);
  out += ',';
  out += fmt_uint(r.seed);
  return out;
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          const char hex[] = "0123456789abcdef";
          out += "\\u00";
          out += hex[(c >> 4) & 0xf];
          out += hex[c & 0xf];
        } else {
          out += c;
        }
    }
  }
  return out;
}

std::string to_json(const EstimateRecord& r) {
  std::string out;
  out.reserve(192);
  out += "{\"event\":\"";
  out += json_escape(r.event);
  out += "\",\"d\":";
  out += fmt_int(r.d);
  out += ",\"s\":";
  out += fmt_int(r.s);
  out += ",\"L\":";
  out += fmt_int(r.L);
  out += ",\"N\":";
  out += fmt_int(r.N);
  out += ",\"p\":";
  out += fmt_double(r.p);
  out += ",\"q\":";
  out += fmt_double(r.q);
  out += ",\"mean\":";
  out += fmt_double(r.mean);
  out += ",\"stderr\":";
  out += fmt_double(r.se);
  out += ",\"n\":";
  out += fmt_int(r.n);
  out += ",\"seed\":";
  out += fmt_uint(r.seed);
  out += "}";
  return out;
}

}  // namespace perclab
