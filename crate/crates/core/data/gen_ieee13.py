"""Writes the reconstructed 13-bus test feeder used by the acceptance suite.

All buses are modelled three-phase with the 601 line configuration, the
distributed load is lumped at 632 and the 75 rooftop PV units (60 kVA each)
are aggregated into 15 blocks of five. Usage: gen_ieee13.py [tap_a tap_b tap_c [out]]
"""
import json, sys
taps = [float(x) for x in sys.argv[1:4]] if len(sys.argv) > 3 else [1.0825, 1.0775, 1.0875]
mile = 5280.0
z601 = [[0.3465,1.0179],[0.1560,0.5017],[0.1580,0.4236],
        [0.1560,0.5017],[0.3375,1.0478],[0.1535,0.3849],
        [0.1580,0.4236],[0.1535,0.3849],[0.3414,1.0348]]
def line(a,b,ft):
    return {"from":a,"to":b,"z":[[round(r*ft/mile,6),round(x*ft/mile,6)] for r,x in z601]}
xfm = [[0.38,0.69] if i%4==0 else [0.0,0.0] for i in range(9)]
buses = ["650","632","633","634","645","646","671","680","684","611","652","692","675"]
segs = [line("650","632",2000), line("632","633",500), {"from":"633","to":"634","z":xfm},
        line("632","645",500), line("645","646",300), line("632","671",2000),
        line("671","680",1000), line("671","684",300), line("684","611",300),
        line("684","652",800), line("671","692",10), line("692","675",500)]
loads = {("634","a"):160,("634","b"):120,("634","c"):120,("645","b"):170,("646","b"):230,
         ("652","a"):128,("671","a"):385,("671","b"):385,("671","c"):385,("675","a"):485,
         ("675","b"):68,("675","c"):290,("692","c"):170,("611","c"):170,
         ("632","a"):17,("632","b"):66,("632","c"):117}
total = sum(loads.values()); assert abs(total-3466)<1e-9
pv_nodes = [("633","a"),("633","b"),("633","c"),("634","a"),("634","b"),("634","c"),
            ("645","a"),("645","b"),("646","b"),("646","c"),("675","a"),("675","b"),("675","c"),
            ("611","c"),("652","a")]
assert len(pv_nodes)==15 and len({b for b,_ in pv_nodes})==7
p_pv = 0.45*total/15
head = (1640.0 - 0.1*total)/15
bus_order = {b:i for i,b in enumerate(buses)}
key = lambda t:(bus_order[t[0]],t[1])
doc = {
 "buses":[{"id":b,"phases":["a","b","c"]} for b in buses],
 "segments":segs,
 "regulators":[{"segment":0,"taps":taps}],
 "slack":"650","base_kva":1000.0,"base_kv":round(4.16/3**0.5,6),
 "loads":[{"bus":b,"phase":p,"p_kw":float(v),"p_min":0.9*v,"p_max":1.1*v,"pf":0.95}
          for (b,p),v in sorted(loads.items(),key=lambda kv:key(kv[0]))],
 "inverters":[{"bus":b,"phase":p,"p_kw":p_pv,"p_min":p_pv-head,"p_max":p_pv+head,
               "s_kva":300.0,"q_kvar":0.0,"mode":"constant-pf"} for b,p in sorted(pv_nodes,key=key)],
}
json.dump(doc, open(sys.argv[4] if len(sys.argv)>4 else "ieee13.json","w"), indent=1)
